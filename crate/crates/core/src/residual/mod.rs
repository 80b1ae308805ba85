//! Residual correction on top of a frozen base policy.
//!
//! The residual sees only what a real cell would: proprioception, the sensed
//! wrench and two camera views (or, for the state-based variant, the noisy
//! goal estimate), plus the base action it is correcting. It is trained
//! off-policy from a mix of harvested demonstrations and online experience.

pub mod demos;
pub mod replay;
pub mod rlpd;
pub mod train;

use std::path::Path;
use std::str::FromStr;

use crate::base::{BasePolicy, EpisodeOutcome, EvalSummary};
use crate::error::{Error, Result};
use crate::geom::{clamp_action, wrap_deg, ActionDelta, Pose2};
use crate::nn::encoder::IMAGE_FEATURES;
use crate::nn::{param_hash, Activation, Checkpoint, GaussianPolicy, ImageEncoder, InputLayout};
use crate::seed::{self, Rng};
use crate::sim::{self, render::IMAGE_SIZE, BaseObs, DomainConfig, ResidualObs, SimState};

pub use demos::{collect_demos, DemoCollection, DemoTrajectory, FloorConfig};
pub use replay::{demo_gate, median, ReplayStore, SampleCounts, Transition};
pub use rlpd::{rlpd_update, td_target, Learner, UpdateLosses};
pub use train::{train_residual, write_metrics, MetricsRow, TrainedResidual};

pub const ACT_DIM: usize = 3;

/// `clamp(a_b + a_r)`.
pub fn combine(a_b: [f64; 3], a_r: [f64; 3]) -> Result<ActionDelta> {
    clamp_action([a_b[0] + a_r[0], a_b[1] + a_r[1], a_b[2] + a_r[2]])
}

/// What the residual observes besides the base action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObsMode {
    /// Encoded camera views and proprioception.
    Image,
    /// Proprioception and the (possibly stale) goal estimate.
    State,
}

impl ObsMode {
    pub fn name(self) -> &'static str {
        match self {
            ObsMode::Image => "image",
            ObsMode::State => "state",
        }
    }
}

impl FromStr for ObsMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(ObsMode::Image),
            "state" => Ok(ObsMode::State),
            _ => Err(Error::format("observation mode", format!("unknown mode {s:?}"))),
        }
    }
}

/// Turns raw residual observations into network inputs.
#[derive(Clone, Debug)]
pub struct Observer {
    pub mode: ObsMode,
    pub encoder_seed: u64,
    encoder: Option<ImageEncoder>,
}

impl Observer {
    pub fn new(mode: ObsMode, encoder_seed: u64) -> Self {
        let pixels = (IMAGE_SIZE * IMAGE_SIZE) as usize;
        let encoder = (mode == ObsMode::Image).then(|| ImageEncoder::new(pixels, encoder_seed));
        Observer { mode, encoder_seed, encoder }
    }

    pub fn dim(&self) -> usize {
        match self.mode {
            ObsMode::Image => IMAGE_FEATURES + ResidualObs::PROPRIO_DIM,
            ObsMode::State => ResidualObs::PROPRIO_DIM + 6,
        }
    }

    /// Encoded observation. `goal_noisy` is only read in state mode.
    pub fn encode(&self, obs: &ResidualObs, goal_noisy: &Pose2) -> Vec<f64> {
        let proprio = obs.proprio();
        match &self.encoder {
            Some(enc) => enc.encode(&obs.image_front, &obs.image_wrist, &proprio),
            None => {
                let g = goal_noisy;
                let e = obs.ee_pose;
                let mut v = proprio.to_vec();
                v.extend([g.x / 20.0, g.y / 20.0, g.theta / 10.0]);
                v.extend([(g.x - e.x) / 5.0, (g.y - e.y) / 5.0, wrap_deg(g.theta - e.theta) / 5.0]);
                v
            }
        }
    }
}

/// Gaussian residual policy with its observation pipeline.
#[derive(Clone, Debug)]
pub struct ResidualPolicy {
    pub policy: GaussianPolicy,
    pub observer: Observer,
    /// Whether the base action is part of the input.
    pub base_input: bool,
}

impl ResidualPolicy {
    pub fn layout(observer: &Observer, base_input: bool) -> InputLayout {
        if base_input {
            InputLayout::new(&[("obs", observer.dim()), ("base_action", ACT_DIM)])
        } else {
            InputLayout::new(&[("obs", observer.dim())])
        }
    }

    /// Fresh policy whose mean is exactly zero everywhere.
    pub fn new(observer: Observer, base_input: bool, hidden: &[usize], init_log_std: f64, rng: &mut Rng) -> Self {
        let layout = Self::layout(&observer, base_input);
        let mut policy = GaussianPolicy::new(layout, hidden, Activation::Relu, ACT_DIM, true, rng);
        policy.reset_head(init_log_std);
        ResidualPolicy { policy, observer, base_input }
    }

    pub fn input(&self, obs: &[f64], a_b: &[f64; 3]) -> Vec<f64> {
        let mut x = Vec::with_capacity(obs.len() + ACT_DIM);
        x.extend_from_slice(obs);
        if self.base_input {
            x.extend_from_slice(a_b);
        }
        x
    }

    /// Mean and standard deviation of the residual for an encoded observation.
    pub fn distribution(&self, obs: &[f64], a_b: &[f64; 3]) -> Result<([f64; 3], [f64; 3])> {
        let (m, s) = self.policy.forward(&self.input(obs, a_b))?;
        Ok(([m[0], m[1], m[2]], [s[0], s[1], s[2]]))
    }

    pub fn mean(&self, obs: &[f64], a_b: &[f64; 3]) -> Result<[f64; 3]> {
        Ok(self.distribution(obs, a_b)?.0)
    }

    pub fn param_hash(&self) -> String {
        param_hash(self.policy.net.params())
    }

    pub fn checkpoint(&self, seed_value: u64) -> Checkpoint {
        let mut ck = Checkpoint::new()
            .with_meta("kind", "residual_policy")
            .with_meta("layout", self.policy.layout.describe())
            .with_meta("obs_mode", self.observer.mode.name())
            .with_meta("encoder_seed", self.observer.encoder_seed)
            .with_meta("base_input", self.base_input)
            .with_meta("seed", seed_value);
        ck.push("policy", &self.policy.net, None);
        ck
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        if ck.meta("kind")? != "residual_policy" {
            return Err(Error::format("checkpoint", format!("{} is not a residual policy", path.display())));
        }
        let bad = |what: &str| Error::format("checkpoint", format!("bad {what}"));
        let mode: ObsMode = ck.meta("obs_mode")?.parse()?;
        let encoder_seed: u64 = ck.meta("encoder_seed")?.parse().map_err(|_| bad("encoder seed"))?;
        let base_input: bool = ck.meta("base_input")?.parse().map_err(|_| bad("base_input flag"))?;
        let layout = InputLayout::parse(ck.meta("layout")?).ok_or_else(|| bad("input layout"))?;
        let observer = Observer::new(mode, encoder_seed);
        if layout != Self::layout(&observer, base_input) {
            return Err(Error::LayoutMismatch { expected: Self::layout(&observer, base_input).dim(), got: layout.dim() });
        }
        let policy = GaussianPolicy::from_net(ck.get("policy")?.net.clone(), layout)?;
        Ok(ResidualPolicy { policy, observer, base_input })
    }
}

/// Base action for a state, or zero when there is no base policy.
pub fn base_action(base: Option<&BasePolicy>, state: &SimState) -> [f64; 3] {
    base.map_or([0.0; 3], |b| b.act(&BaseObs::from_state(state)))
}

/// Runs the deterministic combined policy (base mean plus residual mean)
/// from `state` until success, abort or horizon. Without a residual this is
/// the base policy alone; without a base, the residual alone.
pub fn run_combined_episode(
    base: Option<&BasePolicy>,
    residual: Option<&ResidualPolicy>,
    domain: &DomainConfig,
    mut state: SimState,
) -> Result<EpisodeOutcome> {
    let mut obs = residual.map(|_| sim::observe_residual(&mut state, domain));
    loop {
        let a_b = base_action(base, &state);
        let a_r = match (residual, &obs) {
            (Some(r), Some(o)) => r.mean(&r.observer.encode(o, &state.goal_pose_noisy), &a_b)?,
            _ => [0.0; 3],
        };
        let adv = sim::advance(&state, domain, combine(a_b, a_r)?);
        state = adv.state;
        if adv.done {
            return Ok(EpisodeOutcome { success: adv.success, steps: state.step_count, aborted: adv.aborted });
        }
        if residual.is_some() {
            obs = Some(sim::observe_residual(&mut state, domain));
        }
    }
}

/// Evaluates the combined policy over `n` fresh episodes of `domain`.
pub fn evaluate_combined(
    base: Option<&BasePolicy>,
    residual: Option<&ResidualPolicy>,
    domain: &DomainConfig,
    n: usize,
    eval_seed: u64,
) -> Result<EvalSummary> {
    let mut outcomes = Vec::with_capacity(n);
    for i in 0..n {
        let state = sim::reset(domain, seed::derive(eval_seed, "eval-episode", i as u64));
        outcomes.push(run_combined_episode(base, residual, domain, state)?);
    }
    Ok(EvalSummary::from_outcomes(&outcomes))
}
