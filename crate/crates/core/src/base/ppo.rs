//! Clipped-surrogate policy optimisation with generalized advantage estimates.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::gaussian::log_prob;
use crate::nn::{Adam, GaussianPolicy, Matrix, Mlp};
use crate::seed::Rng;

/// Generalized advantage estimates and returns.
///
/// `dones[t]` means the episode ended after step `t`, so nothing is
/// bootstrapped across it. `next_value` is the value of the state after the
/// final step (ignored when that step is terminal).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    next_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert!(rewards.len() == values.len() && values.len() == dones.len(), "GAE input lengths");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (v_next, carry) = if dones[t] {
            (0.0, 0.0)
        } else if t + 1 == n {
            (next_value, running)
        } else {
            (values[t + 1], running)
        };
        let delta = rewards[t] + gamma * v_next - values[t];
        running = delta + gamma * lambda * carry;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shifts and scales to zero mean and unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.is_empty() {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a -= mean;
    }
    if std > 1e-12 {
        for a in adv.iter_mut() {
            *a /= std;
        }
    }
    // second pass removes the rounding residue of the first
    let m2 = adv.iter().sum::<f64>() / n;
    for a in adv.iter_mut() {
        *a -= m2;
    }
}

/// Per-sample clipped surrogate objective `min(r A, clip(r, 1-e, 1+e) A)`
/// and whether the unclipped branch is the active one.
pub fn clipped_objective(ratio: f64, adv: f64, clip: f64) -> (f64, bool) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

/// Entropy of a diagonal Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    let c = 0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln());
    log_std.iter().map(|l| l + c).sum()
}

/// On-policy samples with precomputed advantages and returns.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct UpdateConfig {
    pub clip_ratio: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Losses {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Optimizers for the policy and the value network.
#[derive(Clone, Debug)]
pub struct PpoOptimizers {
    pub policy: Adam,
    pub value: Adam,
}

/// Several epochs of minibatch updates on one batch. Advantages are
/// normalized over the whole batch before any loss is formed. Returns the
/// losses averaged over all minibatches.
pub fn ppo_update(
    policy: &mut GaussianPolicy,
    value_fn: &mut Mlp,
    batch: &Batch,
    cfg: &UpdateConfig,
    opts: &mut PpoOptimizers,
    rng: &mut Rng,
) -> Result<Losses> {
    let n = batch.len();
    if n == 0 {
        return Ok(Losses::default());
    }
    let mut adv = batch.advantages.clone();
    normalize_advantages(&mut adv);
    let k = policy.act_dim();
    let mut order: Vec<usize> = (0..n).collect();
    let mut acc = Losses::default();
    let mut count = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch.max(1)) {
            let m = chunk.len() as f64;
            let obs = Matrix::from_rows(&chunk.iter().map(|&i| &batch.obs[i][..]).collect::<Vec<_>>());
            let out = policy.forward_batch(&obs)?;
            let mut d_mean = Matrix::zeros(chunk.len(), k);
            let mut d_log_std = Matrix::zeros(chunk.len(), k);
            let mut l = Losses::default();
            for (r, &i) in chunk.iter().enumerate() {
                let mean = out.mean.row(r);
                let log_std = out.log_std.row(r);
                let a = &batch.actions[i];
                let lp = log_prob(mean, log_std, a);
                let log_ratio = lp - batch.log_probs[i];
                let ratio = log_ratio.exp();
                let (obj, active) = clipped_objective(ratio, adv[i], cfg.clip_ratio);
                l.policy -= obj / m;
                l.entropy += gaussian_entropy(log_std) / m;
                l.approx_kl += ((ratio - 1.0) - log_ratio) / m;
                if !active {
                    l.clip_fraction += 1.0 / m;
                }
                // d(-obj)/d(logp) on the active branch, zero when clipped
                let g = if active { -ratio * adv[i] / m } else { 0.0 };
                for j in 0..k {
                    let sd = log_std[j].exp();
                    let z = (a[j] - mean[j]) / sd;
                    d_mean.data[r * k + j] = g * z / sd;
                    d_log_std.data[r * k + j] = g * (z * z - 1.0) - cfg.entropy_coef / m;
                }
            }
            let (v, tape) = value_fn.forward(&obs)?;
            let mut dv = Matrix::zeros(chunk.len(), 1);
            for (r, &i) in chunk.iter().enumerate() {
                let e = v.data[r] - batch.returns[i];
                l.value += e * e / m;
                dv.data[r] = cfg.value_coef * 2.0 * e / m;
            }
            let total = l.policy + cfg.value_coef * l.value - cfg.entropy_coef * l.entropy;
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "policy {} value {} entropy {}",
                    l.policy, l.value, l.entropy
                )));
            }
            let gp = policy.backward(&out, &d_mean, &d_log_std)?;
            opts.policy.step(policy.net.params_mut(), &gp.params)?;
            let gv = value_fn.backward(&tape, &dv)?;
            opts.value.step(value_fn.params_mut(), &gv.params)?;
            acc.policy += l.policy;
            acc.value += l.value;
            acc.entropy += l.entropy;
            acc.clip_fraction += l.clip_fraction;
            acc.approx_kl += l.approx_kl;
            count += 1;
        }
    }
    let c = count as f64;
    Ok(Losses {
        policy: acc.policy / c,
        value: acc.value / c,
        entropy: acc.entropy / c,
        clip_fraction: acc.clip_fraction / c,
        approx_kl: acc.approx_kl / c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gaussian::InputLayout;
    use crate::nn::{Activation, MlpSpec, OutputHead};
    use crate::seed;
    use proptest::prelude::*;

    /// Direct backward recursion, written independently of `compute_gae`.
    fn gae_oracle(r: &[f64], v: &[f64], done: &[bool], next: f64, g: f64, l: f64) -> Vec<f64> {
        let n = r.len();
        let mut out = vec![0.0; n];
        for t in 0..n {
            let mut a = 0.0;
            let mut w = 1.0;
            for s in t..n {
                let vn = if done[s] { 0.0 } else if s + 1 < n { v[s + 1] } else { next };
                a += w * (r[s] + g * vn - v[s]);
                if done[s] {
                    break;
                }
                w *= g * l;
            }
            out[t] = a;
        }
        out
    }

    #[test]
    fn gae_terminal_example() {
        let (a, ret) = compute_gae(&[0.0, 0.0, 1.0], &[0.0; 3], &[false, false, true], 0.0, 0.99, 0.95);
        let gl: f64 = 0.99 * 0.95;
        let expect = [gl * gl, gl, 1.0];
        for i in 0..3 {
            assert!((a[i] - expect[i]).abs() < 1e-12);
            assert_eq!(ret[i], a[i]);
        }
        assert!((a[0] - 0.884_540_25).abs() < 1e-8 && (a[1] - 0.9405).abs() < 1e-12);
    }

    #[test]
    fn gae_degenerate_cases() {
        let r = [0.3, -1.0, 2.0];
        let (a, _) = compute_gae(&r, &[0.0; 3], &[false; 3], 0.0, 0.99, 0.0);
        assert_eq!(a, r.to_vec());
        let (a, _) = compute_gae(&[0.0; 4], &[0.0; 4], &[false; 4], 0.0, 0.99, 0.95);
        assert!(a.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn clip_factor_example() {
        let (obj, active) = clipped_objective(1.5, 2.0, 0.2);
        assert!((obj - 1.2 * 2.0).abs() < 1e-12);
        assert!(!active);
        let (obj, active) = clipped_objective(1.0, -0.7, 0.2);
        assert_eq!(obj, -0.7);
        assert!(active);
    }

    proptest! {
        #[test]
        fn gae_matches_forward_sum(
            r in prop::collection::vec(-5.0f64..5.0, 1..20),
            seed_v in 0u64..1000,
            next in -3.0f64..3.0,
        ) {
            let n = r.len();
            let v: Vec<f64> = (0..n).map(|i| ((seed_v + i as u64) as f64 * 0.77).sin()).collect();
            let done: Vec<bool> = (0..n).map(|i| (seed_v + i as u64) % 5 == 0).collect();
            let (a, _) = compute_gae(&r, &v, &done, next, 0.97, 0.9);
            let o = gae_oracle(&r, &v, &done, next, 0.97, 0.9);
            for i in 0..n {
                prop_assert!((a[i] - o[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn normalized_advantages_have_zero_mean_unit_std(xs in prop::collection::vec(-1e3f64..1e3, 2..300)) {
            let mut a = xs.clone();
            normalize_advantages(&mut a);
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            let std = (a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-10);
            let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread > 1e-6 {
                prop_assert!((std - 1.0).abs() < 1e-10, "std {}", std);
            }
        }
    }

    fn small_policy() -> (GaussianPolicy, Mlp) {
        let mut rng = seed::stream(7, "ppo-test", 0);
        let pol = GaussianPolicy::new(InputLayout::new(&[("obs", 2)]), &[16], Activation::Tanh, 3, false, &mut rng);
        let v = Mlp::new(MlpSpec::new(2, &[16], Activation::Tanh, OutputHead::Scalar), 1.0, &mut rng);
        (pol, v)
    }

    #[test]
    fn positive_advantage_raises_log_prob() {
        let (mut pol, mut v) = small_policy();
        let obs = vec![0.4, -0.2];
        let (mean, std) = pol.forward(&obs).unwrap();
        let ls: Vec<f64> = std.iter().map(|s| s.ln()).collect();
        let good = vec![mean[0] + 0.5, mean[1] - 0.3, mean[2] + 0.1];
        let bad = vec![mean[0] - 0.5, mean[1] + 0.3, mean[2] - 0.1];
        let batch = Batch {
            obs: vec![obs.clone(), obs.clone()],
            actions: vec![good.clone(), bad.clone()],
            log_probs: vec![log_prob(&mean, &ls, &good), log_prob(&mean, &ls, &bad)],
            advantages: vec![1.0, -1.0],
            returns: vec![0.0, 0.0],
        };
        let before = log_prob(&mean, &ls, &good);
        let cfg = UpdateConfig { clip_ratio: 0.2, epochs: 1, minibatch: 2, entropy_coef: 0.0, value_coef: 0.5 };
        let mut opts = PpoOptimizers {
            policy: Adam::new(pol.net.params().len(), 1e-3),
            value: Adam::new(v.params().len(), 1e-3),
        };
        let losses = ppo_update(&mut pol, &mut v, &batch, &cfg, &mut opts, &mut seed::stream(0, "x", 0)).unwrap();
        // on-policy first epoch: ratio 1, surrogate = mean normalized advantage = 0
        assert!(losses.policy.abs() < 1e-12);
        assert_eq!(losses.clip_fraction, 0.0);
        let (m2, s2) = pol.forward(&obs).unwrap();
        let ls2: Vec<f64> = s2.iter().map(|s| s.ln()).collect();
        assert!(log_prob(&m2, &ls2, &good) > before);
    }

    #[test]
    fn policy_gradient_matches_finite_difference() {
        // single minibatch surrogate loss; compare analytic ascent step to FD
        let (pol, _) = small_policy();
        let obs: Vec<Vec<f64>> = (0..4).map(|i| vec![(i as f64).sin(), (i as f64 * 0.5).cos()]).collect();
        let acts: Vec<Vec<f64>> = (0..4).map(|i| vec![0.1 * i as f64, -0.2, 0.05 * i as f64]).collect();
        let old: Vec<f64> = obs
            .iter()
            .zip(&acts)
            .map(|(o, a)| {
                let (m, s) = pol.forward(o).unwrap();
                log_prob(&m, &s.iter().map(|x| x.ln() + 0.05).collect::<Vec<_>>(), a)
            })
            .collect();
        let adv = [0.5, -1.0, 1.5, -1.0];
        let loss = |p: &GaussianPolicy| -> f64 {
            let mut l = 0.0;
            for i in 0..4 {
                let (m, s) = p.forward(&obs[i]).unwrap();
                let ls: Vec<f64> = s.iter().map(|x| x.ln()).collect();
                let ratio = (log_prob(&m, &ls, &acts[i]) - old[i]).exp();
                l -= clipped_objective(ratio, adv[i], 0.2).0 / 4.0;
            }
            l
        };
        let x = Matrix::from_rows(&obs);
        let out = pol.forward_batch(&x).unwrap();
        let mut dm = Matrix::zeros(4, 3);
        let mut dl = Matrix::zeros(4, 3);
        for i in 0..4 {
            let lp = log_prob(out.mean.row(i), out.log_std.row(i), &acts[i]);
            let ratio = (lp - old[i]).exp();
            let (_, active) = clipped_objective(ratio, adv[i], 0.2);
            let g = if active { -ratio * adv[i] / 4.0 } else { 0.0 };
            for j in 0..3 {
                let sd = out.log_std.get(i, j).exp();
                let z = (acts[i][j] - out.mean.get(i, j)) / sd;
                dm.data[i * 3 + j] = g * z / sd;
                dl.data[i * 3 + j] = g * (z * z - 1.0);
            }
        }
        let grads = pol.backward(&out, &dm, &dl).unwrap();
        let h = 1e-6;
        for p in (0..pol.net.params().len()).step_by(5) {
            let mut a = pol.clone();
            a.net.params_mut()[p] += h;
            let mut b = pol.clone();
            b.net.params_mut()[p] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            let an = grads.params[p];
            assert!((an - fd).abs() < 1e-7 || (an - fd).abs() / (an.abs() + 1e-8) < 1e-4, "param {p}: {an} vs {fd}");
        }
    }
}
