//! Soft actor-critic update over symmetric demo/online batches.

use crate::error::{Error, Result};
use crate::nn::gaussian::{log_prob, sample};
use crate::nn::{Adam, CriticEnsemble, Matrix};
use crate::residual::replay::Transition;
use crate::residual::{ObsMode, ResidualPolicy, ACT_DIM};
use crate::seed::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct RlpdConfig {
    pub batch_size: usize,
    /// Gradient updates per environment step.
    pub utd_ratio: usize,
    pub gamma: f64,
    /// Polyak coefficient for the target critics.
    pub tau: f64,
    pub target_entropy: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub init_alpha: f64,
    /// Initial residual standard deviation, as a log.
    pub init_log_std: f64,
    pub hidden: Vec<usize>,
    pub ensemble_size: usize,
    /// Members the target minimum is taken over.
    pub ensemble_subset: usize,
    /// Demo buffer capacity in trajectories.
    pub demo_capacity: usize,
    /// Online buffer capacity in transitions.
    pub online_capacity: usize,
    pub max_env_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Admit fast online successes into the demo buffer.
    pub demo_gate: bool,
    /// Feed the base action to the residual.
    pub base_input: bool,
    pub obs_mode: ObsMode,
}

impl Default for RlpdConfig {
    fn default() -> Self {
        RlpdConfig {
            batch_size: 64,
            utd_ratio: 2,
            gamma: 0.99,
            tau: 0.005,
            target_entropy: -(ACT_DIM as f64),
            actor_lr: 1e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-3,
            init_alpha: 0.001,
            init_log_std: 0.1f64.ln(),
            hidden: vec![64, 64],
            ensemble_size: 2,
            ensemble_subset: 2,
            demo_capacity: 100,
            online_capacity: 100_000,
            max_env_steps: 30_000,
            eval_every: 2_000,
            eval_episodes: 20,
            demo_gate: true,
            base_input: true,
            obs_mode: ObsMode::Image,
        }
    }
}

impl RlpdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return bad("batch_size must be even and positive");
        }
        if self.utd_ratio < 1 {
            return bad("utd_ratio must be at least 1");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.alpha_lr > 0.0 && self.init_alpha > 0.0) {
            return bad("learning rates and initial temperature must be positive");
        }
        if self.ensemble_size < 2 || self.ensemble_subset < 1 || self.ensemble_subset > self.ensemble_size {
            return bad("ensemble needs at least two members and a subset within it");
        }
        if self.demo_capacity == 0 || self.online_capacity == 0 || self.eval_every == 0 {
            return bad("capacities and eval_every must be positive");
        }
        Ok(())
    }
}

/// `r + gamma * (1 - done) * (min_q_next - alpha_log_pi_next)`.
pub fn td_target(reward: f64, done: bool, gamma: f64, min_q_next: f64, alpha_log_pi_next: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * (min_q_next - alpha_log_pi_next)
    }
}

/// Actor, critics, temperature and their optimizers.
#[derive(Clone, Debug)]
pub struct Learner {
    pub actor: ResidualPolicy,
    pub actor_opt: Adam,
    pub critics: CriticEnsemble,
    pub log_alpha: f64,
    pub alpha_opt: Adam,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateLosses {
    pub critic: f64,
    pub actor: f64,
    pub alpha: f64,
    /// Mean of `-log pi` over the batch.
    pub entropy: f64,
    pub mean_q: f64,
}

impl Learner {
    pub fn new(actor: ResidualPolicy, cfg: &RlpdConfig, rng: &mut Rng) -> Self {
        let input = actor.observer.dim() + 2 * ACT_DIM;
        let critics =
            CriticEnsemble::new(input, &cfg.hidden, cfg.ensemble_size, cfg.ensemble_subset, cfg.critic_lr, rng);
        let actor_opt = Adam::new(actor.policy.net.params().len(), cfg.actor_lr);
        Learner { actor, actor_opt, critics, log_alpha: cfg.init_alpha.ln(), alpha_opt: Adam::new(1, cfg.alpha_lr) }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }
}

fn critic_row(obs: &[f64], a_b: &[f64; 3], a_r: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(obs.len() + 2 * ACT_DIM);
    x.extend_from_slice(obs);
    x.extend_from_slice(a_b);
    x.extend_from_slice(a_r);
    x
}

/// Residual actions drawn from the actor with their log densities.
struct Draw {
    out: crate::nn::gaussian::PolicyOutput,
    actions: Vec<Vec<f64>>,
    eps: Vec<Vec<f64>>,
    log_pi: Vec<f64>,
}

fn draw(actor: &ResidualPolicy, obs: &[&[f64]], a_b: &[[f64; 3]], rng: &mut Rng) -> Result<Draw> {
    let rows: Vec<Vec<f64>> = obs.iter().zip(a_b).map(|(o, b)| actor.input(o, b)).collect();
    let out = actor.policy.forward_batch(&Matrix::from_rows(&rows))?;
    let mut actions = Vec::with_capacity(rows.len());
    let mut eps = Vec::with_capacity(rows.len());
    let mut log_pi = Vec::with_capacity(rows.len());
    for r in 0..rows.len() {
        let mean = out.mean.row(r);
        let ls = out.log_std.row(r);
        let std: Vec<f64> = ls.iter().map(|l| l.exp()).collect();
        let (a, e) = sample(mean, &std, rng);
        log_pi.push(log_prob(mean, ls, &a));
        actions.push(a);
        eps.push(e);
    }
    Ok(Draw { out, actions, eps, log_pi })
}

/// Loss `mean(alpha * log pi - min Q)` through the reparameterised sample,
/// the log densities drawn, and the gradient on the actor parameters.
pub fn actor_gradient(
    learner: &Learner,
    obs: &[&[f64]],
    a_b: &[[f64; 3]],
    rng: &mut Rng,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let alpha = learner.alpha();
    let d = draw(&learner.actor, obs, a_b, rng)?;
    let n = obs.len();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| critic_row(obs[i], &a_b[i], &d.actions[i])).collect();
    let (q, dx) = learner.critics.min_q_input_grad(&Matrix::from_rows(&rows))?;
    let off = rows[0].len() - ACT_DIM;
    let inv = 1.0 / n as f64;
    let mut d_mean = Matrix::zeros(n, ACT_DIM);
    let mut d_log_std = Matrix::zeros(n, ACT_DIM);
    let mut loss = 0.0;
    for i in 0..n {
        loss += (alpha * d.log_pi[i] - q[i]) * inv;
        for j in 0..ACT_DIM {
            let dq = dx.get(i, off + j);
            // log pi of a reparameterised sample depends on log std only, with slope -1
            d_mean.data[i * ACT_DIM + j] = -dq * inv;
            d_log_std.data[i * ACT_DIM + j] = (-alpha - dq * d.out.std(i, j) * d.eps[i][j]) * inv;
        }
    }
    let g = learner.actor.policy.backward(&d.out, &d_mean, &d_log_std)?;
    Ok((loss, d.log_pi, g.params))
}

/// One Adam step on the actor loss. Returns the loss and log densities.
pub fn actor_step(learner: &mut Learner, obs: &[&[f64]], a_b: &[[f64; 3]], rng: &mut Rng) -> Result<(f64, Vec<f64>)> {
    let (loss, log_pi, g) = actor_gradient(learner, obs, a_b, rng)?;
    learner.actor_opt.step(learner.actor.policy.net.params_mut(), &g)?;
    Ok((loss, log_pi))
}

fn diagnostics(batch: &[&Transition]) -> String {
    let demo_like = batch.iter().filter(|t| t.reward > 0.0).count();
    let bad_obs = batch.iter().filter(|t| t.obs.iter().chain(&t.next_obs).any(|v| !v.is_finite())).count();
    let bad_act = batch
        .iter()
        .filter(|t| t.base_action.iter().chain(&t.residual_action).any(|v| !v.is_finite()))
        .count();
    format!("batch of {}: {demo_like} rewarded, {bad_obs} non-finite observations, {bad_act} non-finite actions", batch.len())
}

/// Critic regression, actor step, temperature step and target update on one
/// batch.
pub fn rlpd_update(learner: &mut Learner, batch: &[&Transition], cfg: &RlpdConfig, rng: &mut Rng) -> Result<UpdateLosses> {
    let n = batch.len();
    let alpha = learner.alpha();

    let next_obs: Vec<&[f64]> = batch.iter().map(|t| t.next_obs.as_slice()).collect();
    let next_ab: Vec<[f64; 3]> = batch.iter().map(|t| t.next_base_action).collect();
    let next = draw(&learner.actor, &next_obs, &next_ab, rng)?;
    let next_rows: Vec<Vec<f64>> = (0..n).map(|i| critic_row(next_obs[i], &next_ab[i], &next.actions[i])).collect();
    let q_next = learner.critics.target_min(&Matrix::from_rows(&next_rows), rng)?;
    let y: Vec<f64> = (0..n)
        .map(|i| td_target(batch[i].reward, batch[i].done, cfg.gamma, q_next[i], alpha * next.log_pi[i]))
        .collect();
    let rows: Vec<Vec<f64>> =
        batch.iter().map(|t| critic_row(&t.obs, &t.base_action, &t.residual_action)).collect();
    let critic = learner.critics.regress(&Matrix::from_rows(&rows), &y);
    let critic = match critic {
        Ok(l) if l.is_finite() => l,
        Ok(l) => return Err(Error::NonFiniteLoss(format!("critic loss {l}; {}", diagnostics(batch)))),
        Err(Error::NonFiniteGradient(_)) => {
            return Err(Error::NonFiniteLoss(format!("critic gradient; {}", diagnostics(batch))))
        }
        Err(e) => return Err(e),
    };

    let obs: Vec<&[f64]> = batch.iter().map(|t| t.obs.as_slice()).collect();
    let ab: Vec<[f64; 3]> = batch.iter().map(|t| t.base_action).collect();
    let (actor, log_pi) = match actor_step(learner, &obs, &ab, rng) {
        Ok((l, lp)) if l.is_finite() => (l, lp),
        Ok(_) | Err(Error::NonFiniteGradient(_)) => {
            return Err(Error::NonFiniteLoss(format!("actor loss; {}", diagnostics(batch))))
        }
        Err(e) => return Err(e),
    };

    let mean_log_pi = log_pi.iter().sum::<f64>() / n as f64;
    let alpha_loss = -learner.log_alpha * (mean_log_pi + cfg.target_entropy);
    let mut la = [learner.log_alpha];
    learner.alpha_opt.step(&mut la, &[-(mean_log_pi + cfg.target_entropy)])?;
    learner.log_alpha = la[0];

    learner.critics.soft_update(cfg.tau);
    Ok(UpdateLosses {
        critic,
        actor,
        alpha: alpha_loss,
        entropy: -mean_log_pi,
        mean_q: y.iter().sum::<f64>() / n as f64,
    })
}
