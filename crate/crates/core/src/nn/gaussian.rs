//! Diagonal-Gaussian policy head on top of an [`Mlp`].

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::mlp::{Activation, Gradients, Mlp, MlpSpec, OutputHead, Tape};
use crate::nn::tensor::Matrix;
use crate::seed::Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Named, ordered segments of a policy input vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputLayout {
    pub segments: Vec<(String, usize)>,
}

impl InputLayout {
    pub fn new(segments: &[(&str, usize)]) -> Self {
        InputLayout { segments: segments.iter().map(|(n, d)| (n.to_string(), *d)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.segments.iter().map(|(_, d)| d).sum()
    }

    /// Offset and width of a named segment.
    pub fn segment(&self, name: &str) -> Option<(usize, usize)> {
        let mut off = 0;
        for (n, d) in &self.segments {
            if n == name {
                return Some((off, *d));
            }
            off += d;
        }
        None
    }

    pub fn describe(&self) -> String {
        self.segments.iter().map(|(n, d)| format!("{n}:{d}")).collect::<Vec<_>>().join(",")
    }

    pub fn parse(s: &str) -> Option<Self> {
        let segments = s
            .split(',')
            .map(|p| {
                let (n, d) = p.split_once(':')?;
                Some((n.to_string(), d.parse().ok()?))
            })
            .collect::<Option<Vec<_>>>()?;
        Some(InputLayout { segments })
    }
}

/// Batched policy outputs together with the recorded forward pass.
#[derive(Clone, Debug)]
pub struct PolicyOutput {
    pub mean: Matrix,
    pub log_std: Matrix,
    raw: Matrix,
    tape: Tape,
}

impl PolicyOutput {
    pub fn std(&self, row: usize, j: usize) -> f64 {
        self.log_std.get(row, j).exp()
    }
}

#[derive(Clone, Debug)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub layout: InputLayout,
}

impl GaussianPolicy {
    pub fn new(
        layout: InputLayout,
        hidden: &[usize],
        activation: Activation,
        act_dim: usize,
        tanh_mean: bool,
        rng: &mut Rng,
    ) -> Self {
        let spec = MlpSpec::new(layout.dim(), hidden, activation, OutputHead::Gaussian { act_dim, tanh_mean });
        GaussianPolicy { net: Mlp::new(spec, 0.01, rng), layout }
    }

    pub fn from_net(net: Mlp, layout: InputLayout) -> Result<Self> {
        if !matches!(net.spec().output_head, OutputHead::Gaussian { .. }) {
            return Err(Error::format("policy", "network does not have a Gaussian head"));
        }
        if net.spec().input_dim() != layout.dim() {
            return Err(Error::LayoutMismatch { expected: net.spec().input_dim(), got: layout.dim() });
        }
        Ok(GaussianPolicy { net, layout })
    }

    pub fn act_dim(&self) -> usize {
        match self.net.spec().output_head {
            OutputHead::Gaussian { act_dim, .. } => act_dim,
            _ => unreachable!(),
        }
    }

    fn tanh_mean(&self) -> bool {
        matches!(self.net.spec().output_head, OutputHead::Gaussian { tanh_mean: true, .. })
    }

    /// Zeroes the mean half of the output layer and sets every log-std bias
    /// to `log_std`, so the initial mean is exactly zero for any input.
    pub fn reset_head(&mut self, log_std: f64) {
        let k = self.act_dim();
        let mut bias = vec![0.0; 2 * k];
        bias[k..].fill(log_std);
        self.net.set_output_layer(0.0, &bias);
    }

    fn split(&self, raw: &Matrix) -> (Matrix, Matrix) {
        let k = self.act_dim();
        let mut mean = raw.columns(0, k);
        if self.tanh_mean() {
            mean.data.iter_mut().for_each(|v| *v = v.tanh());
        }
        let mut log_std = raw.columns(k, k);
        log_std.data.iter_mut().for_each(|v| *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        (mean, log_std)
    }

    pub fn forward_batch(&self, obs: &Matrix) -> Result<PolicyOutput> {
        if obs.cols != self.layout.dim() {
            return Err(Error::LayoutMismatch { expected: self.layout.dim(), got: obs.cols });
        }
        let (raw, tape) = self.net.forward(obs)?;
        let (mean, log_std) = self.split(&raw);
        Ok(PolicyOutput { mean, log_std, raw, tape })
    }

    /// Mean and standard deviation for a single observation.
    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if obs.len() != self.layout.dim() {
            return Err(Error::LayoutMismatch { expected: self.layout.dim(), got: obs.len() });
        }
        let raw = self.net.predict(&Matrix::from_vec(1, obs.len(), obs.to_vec()))?;
        let (mean, log_std) = self.split(&raw);
        Ok((mean.data, log_std.data.iter().map(|l| l.exp()).collect()))
    }

    /// Backpropagates gradients on the (bounded) mean and (clamped) log-std.
    pub fn backward(&self, out: &PolicyOutput, d_mean: &Matrix, d_log_std: &Matrix) -> Result<Gradients> {
        let k = self.act_dim();
        let tanh = self.tanh_mean();
        let mut d_raw = Matrix::zeros(out.raw.rows, 2 * k);
        for r in 0..out.raw.rows {
            for j in 0..k {
                let dm = d_mean.get(r, j);
                d_raw.data[r * 2 * k + j] = if tanh {
                    let m = out.mean.get(r, j);
                    dm * (1.0 - m * m)
                } else {
                    dm
                };
                let z = out.raw.get(r, k + j);
                let inside = (LOG_STD_MIN..=LOG_STD_MAX).contains(&z);
                d_raw.data[r * 2 * k + k + j] = if inside { d_log_std.get(r, j) } else { 0.0 };
            }
        }
        self.net.backward(&out.tape, &d_raw)
    }
}

/// Diagonal-Gaussian log density.
pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * ln_2pi
        })
        .sum()
}

/// `mean + std * eps` with the standard-normal draws returned alongside.
pub fn sample(mean: &[f64], std: &[f64], rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let eps: Vec<f64> = (0..mean.len()).map(|_| StandardNormal.sample(rng)).collect();
    let a = mean.iter().zip(std).zip(&eps).map(|((m, s), e)| m + s * e).collect();
    (a, eps)
}
