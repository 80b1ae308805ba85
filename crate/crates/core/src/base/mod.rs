//! Pretraining of the state-based base policy in the nominal domain.
//!
//! The policy sees the end-effector state and a goal estimate and is trained
//! with clipped policy-gradient updates on a dense reward that follows the
//! reversed extraction path. Every episode places the socket at a random
//! offset so the policy learns to use the goal input.

pub mod ppo;
pub mod reward;

use std::path::Path;

use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{clamp_action, Pose2};
use crate::nn::gaussian::{log_prob, sample, InputLayout};
use crate::nn::{param_hash, Activation, Adam, Checkpoint, GaussianPolicy, Matrix, Mlp, MlpSpec, OutputHead};
use crate::seed::{self, Rng};
use crate::sim::{self, BaseObs, DomainConfig, SimState};

pub use ppo::{compute_gae, normalize_advantages, ppo_update, Batch, Losses, PpoOptimizers, UpdateConfig};
pub use reward::{imitation_reward, ImitationRewardConfig, Progress};

pub const ACT_DIM: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct PpoConfig {
    pub n_envs: usize,
    pub rollout_len: usize,
    pub clip_ratio: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub total_env_steps: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Training episodes are cut after this many steps and bootstrapped.
    pub episode_len: usize,
    /// Half-widths of the per-episode socket placement jitter, mm and deg.
    pub socket_jitter_xy: f64,
    pub socket_jitter_yaw: f64,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Success rate the run must reach.
    pub target_success: f64,
    /// Training stops once the best evaluation has reached `target_success`
    /// and this many further evaluations failed to improve on it; zero
    /// disables early stopping.
    pub patience: usize,
    pub reward: ImitationRewardConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            n_envs: 8,
            rollout_len: 256,
            clip_ratio: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 4,
            minibatch: 256,
            lr: 3e-4,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            total_env_steps: 1_500_000,
            hidden: vec![128, 128],
            init_log_std: -0.5,
            episode_len: 60,
            socket_jitter_xy: 5.0,
            socket_jitter_yaw: 5.0,
            eval_every: 5,
            eval_episodes: 100,
            target_success: 0.9,
            patience: 3,
            reward: ImitationRewardConfig::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.clip_ratio > 0.0) {
            return bad("clip_ratio must be positive");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if self.n_envs == 0 || self.rollout_len == 0 || self.minibatch == 0 || self.epochs == 0 {
            return bad("n_envs, rollout_len, minibatch and epochs must be positive");
        }
        if self.hidden.is_empty() {
            return bad("at least one hidden layer is required");
        }
        if self.episode_len == 0 || self.eval_every == 0 {
            return bad("episode_len and eval_every must be positive");
        }
        self.reward.validate()
    }
}

/// Deterministic state-based policy used as the base of the residual.
#[derive(Clone, Debug)]
pub struct BasePolicy {
    pub policy: GaussianPolicy,
}

impl BasePolicy {
    pub fn layout() -> InputLayout {
        InputLayout::new(&[("base_obs", BaseObs::DIM)])
    }

    pub fn new_random(hidden: &[usize], init_log_std: f64, rng: &mut Rng) -> Self {
        let mut policy = GaussianPolicy::new(Self::layout(), hidden, Activation::Tanh, ACT_DIM, false, rng);
        let mut bias = vec![0.0; 2 * ACT_DIM];
        bias[ACT_DIM..].fill(init_log_std);
        policy.net.set_output_layer(1.0, &bias);
        BasePolicy { policy }
    }

    /// Mean action, before clamping.
    pub fn act(&self, obs: &BaseObs) -> [f64; 3] {
        let (mean, _) = self.policy.forward(&obs.to_vec()).expect("base layout is fixed");
        [mean[0], mean[1], mean[2]]
    }

    pub fn param_hash(&self) -> String {
        param_hash(self.policy.net.params())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        if ck.meta("kind")? != "base_policy" {
            return Err(Error::format("checkpoint", format!("{} is not a base policy", path.display())));
        }
        let layout = InputLayout::parse(ck.meta("layout")?)
            .ok_or_else(|| Error::format("checkpoint", "bad input layout"))?;
        let policy = GaussianPolicy::from_net(ck.get("policy")?.net.clone(), layout)?;
        Ok(BasePolicy { policy })
    }
}

/// Copy of `domain` with the socket moved by a uniform random offset.
pub fn jittered_domain(domain: &DomainConfig, xy: f64, yaw: f64, rng: &mut Rng) -> DomainConfig {
    let mut u = |h: f64| if h > 0.0 { rng.random_range(-h..=h) } else { 0.0 };
    let s = domain.socket_pose_true;
    let (dx, dy, dt) = (u(xy), u(xy), u(yaw));
    DomainConfig { socket_pose_true: Pose2::new(s.x + dx, s.y + dy, s.theta + dt), ..domain.clone() }
}

/// Result of running a policy for one episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub steps: usize,
    pub aborted: bool,
}

/// Runs the deterministic base policy until success, abort or horizon.
pub fn run_base_episode(policy: &BasePolicy, domain: &DomainConfig, episode_seed: u64) -> Result<EpisodeOutcome> {
    let mut state = sim::reset(domain, episode_seed);
    loop {
        let a = clamp_action(policy.act(&BaseObs::from_state(&state)))?;
        let adv = sim::advance(&state, domain, a);
        state = adv.state;
        if adv.done {
            return Ok(EpisodeOutcome { success: adv.success, steps: state.step_count, aborted: adv.aborted });
        }
    }
}

/// Success rate and mean steps-to-success of a policy evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EvalSummary {
    pub success_rate: f64,
    /// Mean steps over successful episodes; zero when none succeeded.
    pub mean_success_steps: f64,
    pub episodes: usize,
}

impl EvalSummary {
    pub fn from_outcomes(outcomes: &[EpisodeOutcome]) -> Self {
        let ok: Vec<&EpisodeOutcome> = outcomes.iter().filter(|o| o.success).collect();
        let n = outcomes.len();
        EvalSummary {
            success_rate: if n == 0 { 0.0 } else { ok.len() as f64 / n as f64 },
            mean_success_steps: if ok.is_empty() {
                0.0
            } else {
                ok.iter().map(|o| o.steps as f64).sum::<f64>() / ok.len() as f64
            },
            episodes: n,
        }
    }

    /// Higher success first, then at least `margin` fewer steps.
    pub fn better_than(&self, other: &EvalSummary, margin: f64) -> bool {
        self.success_rate > other.success_rate
            || (self.success_rate == other.success_rate
                && self.mean_success_steps < other.mean_success_steps - margin)
    }
}

/// Evaluates the base policy over `n` episodes, each with its own socket
/// jitter drawn from `eval_seed`.
pub fn evaluate_base(
    policy: &BasePolicy,
    domain: &DomainConfig,
    n: usize,
    eval_seed: u64,
    jitter: (f64, f64),
) -> Result<EvalSummary> {
    let mut outcomes = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = seed::stream(eval_seed, "eval-socket", i as u64);
        let d = jittered_domain(domain, jitter.0, jitter.1, &mut rng);
        outcomes.push(run_base_episode(policy, &d, seed::derive(eval_seed, "eval-episode", i as u64))?);
    }
    Ok(EvalSummary::from_outcomes(&outcomes))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub env_steps: usize,
    pub mean_reward: f64,
    pub eval_success: Option<f64>,
    pub eval_steps: Option<f64>,
}

pub fn write_curve(rows: &[CurveRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Output of [`pretrain`].
#[derive(Clone, Debug)]
pub struct Pretrained {
    pub policy: BasePolicy,
    pub value: Mlp,
    pub opts: PpoOptimizers,
    pub curve: Vec<CurveRow>,
    pub env_steps: usize,
    pub best_eval: f64,
    pub reached: bool,
}

impl Pretrained {
    pub fn checkpoint(&self, seed_value: u64) -> Checkpoint {
        let mut ck = Checkpoint::new()
            .with_meta("kind", "base_policy")
            .with_meta("layout", self.policy.policy.layout.describe())
            .with_meta("seed", seed_value)
            .with_meta("env_steps", self.env_steps)
            .with_meta("best_eval", self.best_eval);
        ck.push("policy", &self.policy.policy.net, Some(&self.opts.policy));
        ck.push("value", &self.value, Some(&self.opts.value));
        ck
    }

    /// Turns a run that missed its target into an error.
    pub fn ensure_reached(&self, target: f64) -> Result<()> {
        if self.reached {
            Ok(())
        } else {
            Err(Error::ThresholdNotReached { target, steps: self.env_steps, best: self.best_eval })
        }
    }
}

struct Env {
    domain: DomainConfig,
    state: SimState,
    path: Vec<Pose2>,
    progress: Progress,
}

fn new_env(base: &DomainConfig, cfg: &PpoConfig, run_seed: u64, episode: u64) -> Env {
    let mut rng = seed::stream(run_seed, "train-socket", episode);
    let domain = jittered_domain(base, cfg.socket_jitter_xy, cfg.socket_jitter_yaw, &mut rng);
    let state = sim::reset(&domain, seed::derive(run_seed, "train-episode", episode));
    let path = sim::path_to_goal(state.goal_pose_true, domain.approach_height, cfg.reward.n_waypoints);
    let mut progress = Progress::default();
    progress.update(&state.ee_pose, &path);
    Env { domain, state, path, progress }
}

/// Trains a base policy. Once `target_success` is reached, training stops
/// after `patience` consecutive evaluations without improvement. Returns the
/// best evaluated parameters, ranked by success then speed (or the initial
/// ones when no evaluation ran).
pub fn pretrain(
    cfg: &PpoConfig,
    domain: &DomainConfig,
    run_seed: u64,
    mut on_row: impl FnMut(&CurveRow),
) -> Result<Pretrained> {
    cfg.validate()?;
    domain.validate()?;
    let mut rng = seed::stream(run_seed, "ppo-init", 0);
    let mut policy = BasePolicy::new_random(&cfg.hidden, cfg.init_log_std, &mut rng);
    let mut value = Mlp::new(
        MlpSpec::new(BaseObs::DIM, &cfg.hidden, Activation::Tanh, OutputHead::Scalar),
        1.0,
        &mut rng,
    );
    let mut opts = PpoOptimizers {
        policy: Adam::new(policy.policy.net.params().len(), cfg.lr).with_grad_clip(cfg.max_grad_norm),
        value: Adam::new(value.params().len(), cfg.lr).with_grad_clip(cfg.max_grad_norm),
    };
    let update_cfg = UpdateConfig {
        clip_ratio: cfg.clip_ratio,
        epochs: cfg.epochs,
        minibatch: cfg.minibatch,
        entropy_coef: cfg.entropy_coef,
        value_coef: cfg.value_coef,
    };
    let mut sample_rng = seed::stream(run_seed, "ppo-sample", 0);
    let mut shuffle_rng = seed::stream(run_seed, "ppo-shuffle", 0);
    let eval_seed = seed::derive(run_seed, "ppo-eval", 0);
    let jitter = (cfg.socket_jitter_xy, cfg.socket_jitter_yaw);

    let mut episode = 0u64;
    let mut envs: Vec<Env> = (0..cfg.n_envs)
        .map(|_| {
            episode += 1;
            new_env(domain, cfg, run_seed, episode)
        })
        .collect();

    let mut best: Option<(EvalSummary, BasePolicy)> = None;
    let mut curve = Vec::new();
    let mut env_steps = 0usize;
    let mut iteration = 0usize;
    let mut stale = 0usize;
    while env_steps < cfg.total_env_steps {
        iteration += 1;
        let steps_per_env = cfg.rollout_len.min((cfg.total_env_steps - env_steps).div_ceil(cfg.n_envs));
        let n_envs = envs.len();
        let mut obs = vec![Vec::with_capacity(steps_per_env); n_envs];
        let mut acts = vec![Vec::with_capacity(steps_per_env); n_envs];
        let mut logps = vec![Vec::with_capacity(steps_per_env); n_envs];
        let mut rews = vec![Vec::with_capacity(steps_per_env); n_envs];
        let mut vals = vec![Vec::with_capacity(steps_per_env); n_envs];
        let mut dones = vec![Vec::with_capacity(steps_per_env); n_envs];
        for _ in 0..steps_per_env {
            let rows: Vec<Vec<f64>> = envs.iter().map(|e| BaseObs::from_state(&e.state).to_vec()).collect();
            let x = Matrix::from_rows(&rows);
            let out = policy.policy.forward_batch(&x)?;
            let v = value.predict(&x)?;
            for (i, env) in envs.iter_mut().enumerate() {
                let mean = out.mean.row(i);
                let log_std = out.log_std.row(i);
                let std: Vec<f64> = log_std.iter().map(|l| l.exp()).collect();
                let (a, _) = sample(mean, &std, &mut sample_rng);
                let lp = log_prob(mean, log_std, &a);
                let step = sim::advance(&env.state, &env.domain, clamp_action([a[0], a[1], a[2]])?);
                let success = step.success;
                let mut r = imitation_reward(&step.state.ee_pose, &env.path, &mut env.progress, success, &cfg.reward);
                env.state = step.state;
                let truncated = env.state.step_count >= cfg.episode_len;
                let done = step.aborted || truncated;
                if truncated && !step.aborted {
                    let next = Matrix::from_vec(1, BaseObs::DIM, BaseObs::from_state(&env.state).to_vec());
                    r += cfg.gamma * value.predict(&next)?.data[0];
                }
                obs[i].push(rows[i].clone());
                acts[i].push(a);
                logps[i].push(lp);
                rews[i].push(r);
                vals[i].push(v.data[i]);
                dones[i].push(done);
                if done {
                    episode += 1;
                    *env = new_env(domain, cfg, run_seed, episode);
                }
            }
        }
        env_steps += steps_per_env * n_envs;

        let mut batch = Batch::default();
        let mut reward_sum = 0.0;
        for (i, env) in envs.iter().enumerate() {
            let next = Matrix::from_vec(1, BaseObs::DIM, BaseObs::from_state(&env.state).to_vec());
            let next_v = value.predict(&next)?.data[0];
            let (adv, ret) = compute_gae(&rews[i], &vals[i], &dones[i], next_v, cfg.gamma, cfg.gae_lambda);
            reward_sum += rews[i].iter().sum::<f64>();
            batch.obs.append(&mut obs[i]);
            batch.actions.append(&mut acts[i]);
            batch.log_probs.append(&mut logps[i]);
            batch.advantages.extend(adv);
            batch.returns.extend(ret);
        }
        let mean_reward = reward_sum / batch.len() as f64;
        ppo_update(&mut policy.policy, &mut value, &batch, &update_cfg, &mut opts, &mut shuffle_rng)?;

        let last = env_steps >= cfg.total_env_steps;
        let eval = if iteration % cfg.eval_every == 0 || last {
            let e = evaluate_base(&policy, domain, cfg.eval_episodes, eval_seed, jitter)?;
            if best.as_ref().is_none_or(|(b, _)| e.better_than(b, 0.5)) {
                best = Some((e, policy.clone()));
                stale = 0;
            } else {
                stale += 1;
            }
            Some(e)
        } else {
            None
        };
        let row = CurveRow {
            iteration,
            env_steps,
            mean_reward,
            eval_success: eval.map(|e| e.success_rate),
            eval_steps: eval.map(|e| e.mean_success_steps),
        };
        on_row(&row);
        curve.push(row);
        let reached = best.as_ref().is_some_and(|(b, _)| b.success_rate >= cfg.target_success);
        if cfg.patience > 0 && reached && stale >= cfg.patience {
            break;
        }
    }

    let (best_eval, policy) = match best {
        Some((e, p)) => (e.success_rate, p),
        None => (0.0, policy),
    };
    Ok(Pretrained {
        reached: best_eval >= cfg.target_success,
        policy,
        value,
        opts,
        curve,
        env_steps,
        best_eval,
    })
}
