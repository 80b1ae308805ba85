//! Ensemble of Q-networks with slowly tracking target copies.

use rand::seq::index;

use crate::error::Result;
use crate::nn::adam::Adam;
use crate::nn::mlp::{Activation, Mlp, MlpSpec, OutputHead};
use crate::nn::tensor::Matrix;
use crate::seed::Rng;

#[derive(Clone, Debug)]
pub struct CriticEnsemble {
    pub members: Vec<Mlp>,
    pub targets: Vec<Mlp>,
    pub opts: Vec<Adam>,
    /// Number of members the target minimum is taken over.
    pub subset: usize,
}

impl CriticEnsemble {
    pub fn new(input_dim: usize, hidden: &[usize], n: usize, subset: usize, lr: f64, rng: &mut Rng) -> Self {
        assert!(n >= 2, "an ensemble needs at least two members");
        assert!((1..=n).contains(&subset));
        let spec = MlpSpec::new(input_dim, hidden, Activation::Relu, OutputHead::Scalar).with_layer_norm();
        let members: Vec<Mlp> = (0..n).map(|_| Mlp::new(spec.clone(), 1.0, rng)).collect();
        let targets = members.clone();
        let opts = members.iter().map(|m| Adam::new(m.params().len(), lr)).collect();
        CriticEnsemble { members, targets, opts, subset }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Per-member Q predictions, one vector per member.
    pub fn q_values(&self, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        self.members.iter().map(|m| Ok(m.predict(x)?.data)).collect()
    }

    /// Target-network values reduced by the minimum over a random subset of
    /// members (drawn once for the whole batch).
    pub fn target_min(&self, x: &Matrix, rng: &mut Rng) -> Result<Vec<f64>> {
        let chosen = index::sample(rng, self.targets.len(), self.subset);
        let outs: Vec<Vec<f64>> =
            chosen.iter().map(|i| Ok(self.targets[i].predict(x)?.data)).collect::<Result<_>>()?;
        Ok(min_over(&outs))
    }

    /// One squared-error regression step of every member toward `y`.
    /// Returns the mean loss across members.
    pub fn regress(&mut self, x: &Matrix, y: &[f64]) -> Result<f64> {
        let n = y.len() as f64;
        let mut total = 0.0;
        for (m, opt) in self.members.iter_mut().zip(&mut self.opts) {
            let (q, tape) = m.forward(x)?;
            let mut d = Matrix::zeros(q.rows, 1);
            let mut loss = 0.0;
            for i in 0..y.len() {
                let e = q.data[i] - y[i];
                loss += e * e / n;
                d.data[i] = 2.0 * e / n;
            }
            total += loss;
            let g = m.backward(&tape, &d)?;
            opt.step(m.params_mut(), &g.params)?;
        }
        Ok(total / self.members.len() as f64)
    }

    /// Per-row minimum Q over members and its gradient with respect to the
    /// input, routed through whichever member attains the minimum.
    pub fn min_q_input_grad(&self, x: &Matrix) -> Result<(Vec<f64>, Matrix)> {
        let mut runs = Vec::with_capacity(self.members.len());
        for m in &self.members {
            runs.push(m.forward(x)?);
        }
        let mut q = vec![f64::INFINITY; x.rows];
        let mut arg = vec![0usize; x.rows];
        for (k, (out, _)) in runs.iter().enumerate() {
            for r in 0..x.rows {
                if out.data[r] < q[r] {
                    q[r] = out.data[r];
                    arg[r] = k;
                }
            }
        }
        let mut dx = Matrix::zeros(x.rows, x.cols);
        for (k, (m, (_, tape))) in self.members.iter().zip(&runs).enumerate() {
            let sel = Matrix::from_vec(x.rows, 1, arg.iter().map(|&a| if a == k { 1.0 } else { 0.0 }).collect());
            if sel.data.iter().all(|v| *v == 0.0) {
                continue;
            }
            let g = m.backward(tape, &sel)?;
            for (a, b) in dx.data.iter_mut().zip(&g.input.data) {
                *a += b;
            }
        }
        Ok((q, dx))
    }

    pub fn soft_update(&mut self, tau: f64) {
        for (t, m) in self.targets.iter_mut().zip(&self.members) {
            t.soft_update_from(m, tau);
        }
    }
}

/// Element-wise minimum across member outputs.
pub fn min_over(outs: &[Vec<f64>]) -> Vec<f64> {
    let mut out = outs[0].clone();
    for o in &outs[1..] {
        for (a, b) in out.iter_mut().zip(o) {
            *a = a.min(*b);
        }
    }
    out
}
