//! Multilayer perceptron with a recorded forward pass and manual backward.

use std::sync::atomic::{AtomicU64, Ordering};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::tensor::{linear_forward, linear_input_grad, linear_weight_grad, Matrix};
use crate::seed::Rng;

const LN_EPS: f64 = 1e-5;

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    fn deriv(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// How the raw output layer is interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputHead {
    /// Plain linear outputs.
    Linear,
    /// `2 * act_dim` outputs: mean (optionally tanh-bounded) then log-std.
    Gaussian { act_dim: usize, tanh_mean: bool },
    /// A single value.
    Scalar,
}

/// Architecture of an [`Mlp`]. `layer_sizes` runs input, hidden..., output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub layer_norm: bool,
    pub output_head: OutputHead,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], activation: Activation, head: OutputHead) -> Self {
        assert!(!hidden.is_empty(), "an MLP needs at least one hidden layer");
        let out = match head {
            OutputHead::Gaussian { act_dim, .. } => 2 * act_dim,
            OutputHead::Scalar => 1,
            OutputHead::Linear => panic!("use MlpSpec::linear for linear heads"),
        };
        let mut layer_sizes = vec![input];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(out);
        MlpSpec { layer_sizes, activation, layer_norm: false, output_head: head }
    }

    pub fn linear(input: usize, hidden: &[usize], output: usize, activation: Activation) -> Self {
        assert!(!hidden.is_empty(), "an MLP needs at least one hidden layer");
        let mut layer_sizes = vec![input];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(output);
        MlpSpec { layer_sizes, activation, layer_norm: false, output_head: OutputHead::Linear }
    }

    pub fn with_layer_norm(mut self) -> Self {
        self.layer_norm = true;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Offsets into the flat parameter vector.
    fn layout(&self) -> Vec<LayerSlots> {
        let mut off = 0;
        let mut out = Vec::new();
        for l in 0..self.n_layers() {
            let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = off;
            off += i * o;
            let b = off;
            off += o;
            let ln = if self.layer_norm && l + 1 < self.n_layers() {
                let g = off;
                off += 2 * o;
                Some(g)
            } else {
                None
            };
            out.push(LayerSlots { fan_in: i, fan_out: o, w, b, ln });
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.layout().last().map_or(0, |l| l.b + l.fan_out + l.ln.map_or(0, |_| 2 * l.fan_out))
    }

    /// One-line text description used in checkpoint headers.
    pub fn describe(&self) -> String {
        let sizes: Vec<String> = self.layer_sizes.iter().map(|s| s.to_string()).collect();
        let head = match self.output_head {
            OutputHead::Linear => "linear".to_string(),
            OutputHead::Scalar => "scalar".to_string(),
            OutputHead::Gaussian { act_dim, tanh_mean } => {
                format!("gaussian:{act_dim}:{}", if tanh_mean { "tanh" } else { "linear" })
            }
        };
        format!(
            "layers={} activation={} layer_norm={} head={}",
            sizes.join(","),
            self.activation.name(),
            self.layer_norm,
            head
        )
    }

    pub fn parse_description(s: &str) -> Option<Self> {
        let mut layer_sizes = None;
        let mut activation = None;
        let mut layer_norm = None;
        let mut head = None;
        for part in s.split_whitespace() {
            let (k, v) = part.split_once('=')?;
            match k {
                "layers" => {
                    layer_sizes = Some(v.split(',').map(|x| x.parse().ok()).collect::<Option<Vec<usize>>>()?)
                }
                "activation" => activation = Activation::parse(v),
                "layer_norm" => layer_norm = v.parse().ok(),
                "head" => {
                    head = match v {
                        "linear" => Some(OutputHead::Linear),
                        "scalar" => Some(OutputHead::Scalar),
                        g => {
                            let mut it = g.split(':');
                            (it.next()? == "gaussian").then_some(())?;
                            let act_dim = it.next()?.parse().ok()?;
                            let tanh_mean = it.next()? == "tanh";
                            Some(OutputHead::Gaussian { act_dim, tanh_mean })
                        }
                    }
                }
                _ => return None,
            }
        }
        Some(MlpSpec { layer_sizes: layer_sizes?, activation: activation?, layer_norm: layer_norm?, output_head: head? })
    }
}

#[derive(Clone, Copy, Debug)]
struct LayerSlots {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
    ln: Option<usize>,
}

/// Intermediate values of one batched forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    net_id: u64,
    version: u64,
    input: Matrix,
    layers: Vec<LayerTape>,
}

#[derive(Clone, Debug)]
struct LayerTape {
    pre: Matrix,
    normed: Option<(Matrix, Vec<f64>)>,
    post: Matrix,
}

/// Gradients from [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Matrix,
}

/// A perceptron owning its flat parameter vector.
///
/// Every mutation of the parameters bumps a version counter; a [`Tape`]
/// recorded at an older version is rejected by [`Mlp::backward`].
#[derive(Debug)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
    id: u64,
    version: u64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Mlp::from_params(self.spec.clone(), self.params.clone())
    }
}

impl Mlp {
    /// Glorot-scaled normal weights, zero biases, unit LayerNorm gains.
    /// The output layer is scaled by `output_gain`.
    pub fn new(spec: MlpSpec, output_gain: f64, rng: &mut Rng) -> Self {
        let mut params = vec![0.0; spec.n_params()];
        let layout = spec.layout();
        let last = layout.len() - 1;
        for (l, s) in layout.iter().enumerate() {
            let gain = if l == last {
                output_gain
            } else if spec.activation == Activation::Relu {
                2f64.sqrt()
            } else {
                1.0
            };
            let std = gain * (1.0 / s.fan_in as f64).sqrt();
            for p in &mut params[s.w..s.w + s.fan_in * s.fan_out] {
                let z: f64 = StandardNormal.sample(rng);
                *p = z * std;
            }
            if let Some(g) = s.ln {
                params[g..g + s.fan_out].fill(1.0);
            }
        }
        Mlp::from_params(spec, params)
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Self {
        assert_eq!(params.len(), spec.n_params(), "parameter count for {}", spec.describe());
        Mlp { spec, params, id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed), version: 0 }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Mutable access to the parameters; invalidates recorded tapes.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    /// Zeroes the output layer's weights and the selected bias entries,
    /// and sets the remaining output biases from `bias`.
    pub fn set_output_layer(&mut self, weight_scale: f64, bias: &[f64]) {
        let s = *self.spec.layout().last().unwrap();
        assert_eq!(bias.len(), s.fan_out);
        let p = self.params_mut();
        for w in &mut p[s.w..s.w + s.fan_in * s.fan_out] {
            *w *= weight_scale;
        }
        p[s.b..s.b + s.fan_out].copy_from_slice(bias);
    }

    /// Polyak update `self <- (1 - tau) self + tau other`.
    pub fn soft_update_from(&mut self, other: &Mlp, tau: f64) {
        let src = other.params.clone();
        for (p, q) in self.params_mut().iter_mut().zip(src) {
            *p += tau * (q - *p);
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols != self.spec.input_dim() {
            return Err(Error::LayoutMismatch { expected: self.spec.input_dim(), got: x.cols });
        }
        Ok(())
    }

    /// Batched forward pass without recording.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let layout = self.spec.layout();
        let last = layout.len() - 1;
        let mut h = x.clone();
        for (l, s) in layout.iter().enumerate() {
            let mut z = linear_forward(&h, &self.params[s.w..s.b], &self.params[s.b..s.b + s.fan_out], s.fan_out);
            if l == last {
                return Ok(z);
            }
            if let Some(g) = s.ln {
                layer_norm_forward(&mut z, &self.params[g..g + s.fan_out], &self.params[g + s.fan_out..g + 2 * s.fan_out]);
            }
            let act = self.spec.activation;
            z.data.iter_mut().for_each(|v| *v = act.apply(*v));
            h = z;
        }
        unreachable!()
    }

    /// Batched forward pass that records a tape for [`Mlp::backward`].
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Tape)> {
        self.check_input(x)?;
        let layout = self.spec.layout();
        let last = layout.len() - 1;
        let mut layers = Vec::with_capacity(layout.len());
        let mut h = x.clone();
        for (l, s) in layout.iter().enumerate() {
            let pre = linear_forward(&h, &self.params[s.w..s.b], &self.params[s.b..s.b + s.fan_out], s.fan_out);
            if l == last {
                layers.push(LayerTape { post: pre.clone(), pre, normed: None });
                break;
            }
            let mut z = pre.clone();
            let normed = s.ln.map(|g| {
                let inv_std = layer_norm_stats(&z);
                let xhat = normalize(&z, &inv_std);
                let gamma = &self.params[g..g + s.fan_out];
                let beta = &self.params[g + s.fan_out..g + 2 * s.fan_out];
                for r in 0..z.rows {
                    let row = z.row_mut(r);
                    let xr = xhat.row(r);
                    for c in 0..row.len() {
                        row[c] = gamma[c] * xr[c] + beta[c];
                    }
                }
                (xhat, inv_std)
            });
            let act = self.spec.activation;
            let mut post = z.clone();
            post.data.iter_mut().for_each(|v| *v = act.apply(*v));
            // `pre` holds the activation input (after normalization)
            layers.push(LayerTape { pre: z, normed, post: post.clone() });
            h = post;
        }
        let out = layers.last().unwrap().post.clone();
        Ok((out, Tape { net_id: self.id, version: self.version, input: x.clone(), layers }))
    }

    /// Gradient of `sum(d_out * output)` with respect to every parameter
    /// and to the input.
    pub fn backward(&self, tape: &Tape, d_out: &Matrix) -> Result<Gradients> {
        if tape.net_id != self.id || tape.version != self.version {
            return Err(Error::StaleGraph { recorded: tape.version, current: self.version });
        }
        let layout = self.spec.layout();
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = d_out.clone();
        for l in (0..layout.len()).rev() {
            let s = layout[l];
            let lt = &tape.layers[l];
            if l + 1 < layout.len() {
                // through the activation
                let act = self.spec.activation;
                for ((d, z), a) in delta.data.iter_mut().zip(&lt.pre.data).zip(&lt.post.data) {
                    *d *= act.deriv(*z, *a);
                }
                if let (Some(g), Some((xhat, inv_std))) = (s.ln, &lt.normed) {
                    let (gamma_grad, rest) = grads[g..g + 2 * s.fan_out].split_at_mut(s.fan_out);
                    let gamma = &self.params[g..g + s.fan_out];
                    delta = layer_norm_backward(&delta, xhat, inv_std, gamma, gamma_grad, rest);
                }
            }
            let input = if l == 0 { &tape.input } else { &tape.layers[l - 1].post };
            linear_weight_grad(&delta, input, &mut grads[s.w..s.b]);
            let gb = &mut grads[s.b..s.b + s.fan_out];
            for r in 0..delta.rows {
                for (g, d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            delta = linear_input_grad(&delta, &self.params[s.w..s.b], s.fan_in);
        }
        Ok(Gradients { params: grads, input: delta })
    }
}

fn layer_norm_stats(z: &Matrix) -> Vec<f64> {
    let n = z.cols as f64;
    (0..z.rows)
        .map(|r| {
            let row = z.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            1.0 / (var + LN_EPS).sqrt()
        })
        .collect()
}

fn normalize(z: &Matrix, inv_std: &[f64]) -> Matrix {
    let n = z.cols as f64;
    let mut out = z.clone();
    for r in 0..z.rows {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / n;
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv_std[r]);
    }
    out
}

fn layer_norm_forward(z: &mut Matrix, gamma: &[f64], beta: &[f64]) {
    let inv_std = layer_norm_stats(z);
    let xhat = normalize(z, &inv_std);
    for r in 0..z.rows {
        let row = z.row_mut(r);
        for (c, v) in row.iter_mut().enumerate() {
            *v = gamma[c] * xhat.get(r, c) + beta[c];
        }
    }
}

fn layer_norm_backward(
    dy: &Matrix,
    xhat: &Matrix,
    inv_std: &[f64],
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Matrix {
    let n = dy.cols as f64;
    let mut dz = Matrix::zeros(dy.rows, dy.cols);
    for r in 0..dy.rows {
        let dyr = dy.row(r);
        let xr = xhat.row(r);
        let mut sum_dx = 0.0;
        let mut sum_dx_x = 0.0;
        for c in 0..dy.cols {
            dgamma[c] += dyr[c] * xr[c];
            dbeta[c] += dyr[c];
            let dx = dyr[c] * gamma[c];
            sum_dx += dx;
            sum_dx_x += dx * xr[c];
        }
        let out = dz.row_mut(r);
        for c in 0..dy.cols {
            let dx = dyr[c] * gamma[c];
            out[c] = inv_std[r] / n * (n * dx - sum_dx - xr[c] * sum_dx_x);
        }
    }
    dz
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn spec_description_roundtrips() {
        let s = MlpSpec::new(7, &[5, 4], Activation::Relu, OutputHead::Gaussian { act_dim: 3, tanh_mean: true })
            .with_layer_norm();
        assert_eq!(MlpSpec::parse_description(&s.describe()), Some(s.clone()));
        let net = Mlp::new(s.clone(), 1.0, &mut seed::stream(0, "t", 0));
        assert_eq!(net.params().len(), 7 * 5 + 5 + 10 + 5 * 4 + 4 + 8 + 4 * 6 + 6);
    }

    #[test]
    fn predict_equals_forward() {
        let spec = MlpSpec::linear(4, &[6, 5], 2, Activation::Tanh).with_layer_norm();
        let net = Mlp::new(spec, 1.0, &mut seed::stream(1, "t", 0));
        let x = Matrix::from_vec(3, 4, (0..12).map(|v| (v as f64 * 0.7).cos()).collect());
        let (y, _) = net.forward(&x).unwrap();
        assert_eq!(net.predict(&x).unwrap(), y);
    }

    #[test]
    fn layout_mismatch_is_reported() {
        let net = Mlp::new(MlpSpec::linear(4, &[3], 1, Activation::Relu), 1.0, &mut seed::stream(0, "t", 0));
        let err = net.predict(&Matrix::zeros(1, 5)).unwrap_err();
        assert!(matches!(err, Error::LayoutMismatch { expected: 4, got: 5 }));
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut net = Mlp::new(MlpSpec::linear(2, &[3], 1, Activation::Tanh), 1.0, &mut seed::stream(0, "t", 0));
        let x = Matrix::from_vec(1, 2, vec![0.1, 0.2]);
        let (_, tape) = net.forward(&x).unwrap();
        net.params_mut()[0] += 1.0;
        let d = Matrix::from_vec(1, 1, vec![1.0]);
        assert!(matches!(net.backward(&tape, &d), Err(Error::StaleGraph { .. })));
        let other = net.clone();
        let (_, tape) = net.forward(&x).unwrap();
        assert!(other.backward(&tape, &d).is_err());
    }

    #[test]
    fn single_hidden_unit_hand_computed() {
        // y = w2 * tanh(w1 . x + b1) + b2
        let spec = MlpSpec::linear(2, &[1], 1, Activation::Tanh);
        let net = Mlp::from_params(spec, vec![0.5, -1.0, 0.25, 2.0, -0.5]);
        let x = Matrix::from_vec(1, 2, vec![1.0, 0.5]);
        let y = net.predict(&x).unwrap();
        let expect = 2.0 * (0.5f64 * 1.0 - 1.0 * 0.5 + 0.25).tanh() - 0.5;
        assert!((y.data[0] - expect).abs() < 1e-15);
    }
}
