//! Evaluation, socket-displacement sweeps, ablations and the transfer task.

use std::path::Path;

use serde::Serialize;

use crate::base::BasePolicy;
use crate::error::Result;
use crate::geom::{wrap_deg, Pose2};
use crate::residual::demos::DemoTrajectory;
use crate::residual::rlpd::RlpdConfig;
use crate::residual::{
    base_action, collect_demos, combine, run_combined_episode, train_residual, FloorConfig, ObsMode,
    ResidualPolicy, TrainedResidual,
};
use crate::seed;
use crate::sim::{self, contact::Wrench, DomainConfig, SimState};

/// Policies acting together: base mean plus residual mean. Either may be
/// absent (a missing base acts as zero).
#[derive(Clone, Copy, Debug)]
pub struct Stack<'a> {
    pub base: Option<&'a BasePolicy>,
    pub residual: Option<&'a ResidualPolicy>,
}

impl<'a> Stack<'a> {
    pub fn base_only(base: &'a BasePolicy) -> Self {
        Stack { base: Some(base), residual: None }
    }

    pub fn with_residual(base: &'a BasePolicy, residual: &'a ResidualPolicy) -> Self {
        Stack { base: Some(base), residual: Some(residual) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub steps: usize,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub n_episodes: usize,
    pub success_rate: f64,
    /// Mean over successful episodes only; absent when none succeeded.
    pub mean_cycle_time_s: Option<f64>,
    pub episodes: Vec<EpisodeRecord>,
}

impl EvalReport {
    pub fn from_records(episodes: Vec<EpisodeRecord>, control_dt: f64) -> Self {
        let n = episodes.len();
        let ok: Vec<&EpisodeRecord> = episodes.iter().filter(|e| e.success).collect();
        EvalReport {
            n_episodes: n,
            success_rate: if n == 0 { 0.0 } else { ok.len() as f64 / n as f64 },
            mean_cycle_time_s: (!ok.is_empty())
                .then(|| ok.iter().map(|e| e.steps as f64 * control_dt).sum::<f64>() / ok.len() as f64),
            episodes,
        }
    }
}

fn episode_seed(eval_seed: u64, i: usize) -> u64 {
    seed::derive(eval_seed, "eval-episode", i as u64)
}

fn run_from(stack: Stack, domain: &DomainConfig, start: SimState, ep_seed: u64) -> Result<EpisodeRecord> {
    let o = run_combined_episode(stack.base, stack.residual, domain, start)?;
    Ok(EpisodeRecord { seed: ep_seed, steps: o.steps, success: o.success })
}

/// Deterministic evaluation over `n` noisy-goal episodes.
pub fn evaluate(stack: Stack, domain: &DomainConfig, n: usize, eval_seed: u64) -> Result<EvalReport> {
    let mut eps = Vec::with_capacity(n);
    for i in 0..n {
        let s = episode_seed(eval_seed, i);
        eps.push(run_from(stack, domain, sim::reset(domain, s), s)?);
    }
    Ok(EvalReport::from_records(eps, domain.control_dt))
}

/// The origin and the four cardinal 20 mm socket displacements.
pub const SWEEP_OFFSETS: [(f64, f64); 5] = [(0.0, 0.0), (20.0, 0.0), (-20.0, 0.0), (0.0, 20.0), (0.0, -20.0)];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OffsetReport {
    pub dx_mm: f64,
    pub dy_mm: f64,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessGrid {
    pub cells: Vec<OffsetReport>,
}

impl RobustnessGrid {
    /// Mean success over the displaced (non-origin) cells.
    pub fn displaced_success(&self) -> f64 {
        let d: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.dx_mm != 0.0 || c.dy_mm != 0.0)
            .map(|c| c.report.success_rate)
            .collect();
        if d.is_empty() {
            0.0
        } else {
            d.iter().sum::<f64>() / d.len() as f64
        }
    }
}

/// Moves the socket by each offset while the goal estimate stays built
/// around the original socket pose, so only images reveal the move.
pub fn robustness_sweep(
    stack: Stack,
    domain: &DomainConfig,
    offsets: &[(f64, f64)],
    n: usize,
    eval_seed: u64,
) -> Result<RobustnessGrid> {
    let stale = domain.socket_pose_true;
    let mut cells = Vec::with_capacity(offsets.len());
    for &(dx, dy) in offsets {
        let moved = DomainConfig {
            socket_pose_true: Pose2::new(stale.x + dx, stale.y + dy, stale.theta),
            ..domain.clone()
        };
        let mut eps = Vec::with_capacity(n);
        for i in 0..n {
            let s = episode_seed(eval_seed, i);
            eps.push(run_from(stack, &moved, sim::reset_with_socket(&moved, stale, s), s)?);
        }
        cells.push(OffsetReport { dx_mm: dx, dy_mm: dy, report: EvalReport::from_records(eps, domain.control_dt) });
    }
    Ok(RobustnessGrid { cells })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoDemoUpdate,
    NoBaseActionInput,
    BaseOnly,
    ScratchRl,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::Full, Variant::NoDemoUpdate, Variant::NoBaseActionInput, Variant::BaseOnly, Variant::ScratchRl];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDemoUpdate => "no-demo-update",
            Variant::NoBaseActionInput => "no-base-action-input",
            Variant::BaseOnly => "base-only",
            Variant::ScratchRl => "scratch-rl",
        }
    }
}

/// Trains the residual for an ablation variant; `None` for base-only.
pub fn train_variant(
    variant: Variant,
    base: &BasePolicy,
    demos: &[DemoTrajectory],
    domain: &DomainConfig,
    cfg: &RlpdConfig,
    run_seed: u64,
) -> Result<Option<TrainedResidual>> {
    let out = match variant {
        Variant::BaseOnly => return Ok(None),
        Variant::Full => train_residual(Some(base), domain, demos, cfg, run_seed, |_| {})?,
        Variant::NoDemoUpdate => {
            let c = RlpdConfig { demo_gate: false, ..cfg.clone() };
            train_residual(Some(base), domain, demos, &c, run_seed, |_| {})?
        }
        Variant::NoBaseActionInput => {
            let c = RlpdConfig { base_input: false, ..cfg.clone() };
            train_residual(Some(base), domain, demos, &c, run_seed, |_| {})?
        }
        Variant::ScratchRl => {
            let relabelled: Vec<DemoTrajectory> = demos.iter().map(|d| d.relabel_without_base()).collect();
            train_residual(None, domain, &relabelled, cfg, run_seed, |_| {})?
        }
    };
    Ok(Some(out))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub success_rate: f64,
    pub mean_cycle_time_s: Option<f64>,
}

/// Evaluates every variant for one seed on shared base and demos. The
/// trained full-method residual is returned alongside for reuse.
pub fn ablate_seed(
    base: &BasePolicy,
    demos: &[DemoTrajectory],
    domain: &DomainConfig,
    cfg: &RlpdConfig,
    run_seed: u64,
    eval_episodes: usize,
    variants: &[Variant],
) -> Result<(Vec<AblationRow>, Option<TrainedResidual>)> {
    let eval_seed = seed::derive(run_seed, "ablation-eval", 0);
    let mut rows = Vec::new();
    let mut full = None;
    for &v in variants {
        let trained = train_variant(v, base, demos, domain, cfg, run_seed)?;
        let stack = match (&trained, v) {
            (None, _) => Stack::base_only(base),
            (Some(t), Variant::ScratchRl) => Stack { base: None, residual: Some(&t.policy) },
            (Some(t), _) => Stack::with_residual(base, &t.policy),
        };
        let r = evaluate(stack, domain, eval_episodes, eval_seed)?;
        rows.push(AblationRow { variant: v, seed: run_seed, success_rate: r.success_rate, mean_cycle_time_s: r.mean_cycle_time_s });
        if v == Variant::Full {
            full = trained;
        }
    }
    Ok((rows, full))
}

/// Everything one seed of the ablation study needs upstream.
pub struct SeedInputs {
    pub seed: u64,
    pub base: BasePolicy,
    pub demos: Vec<DemoTrajectory>,
}

/// Runs all variants across seeds. Every variant of a seed shares the same
/// base policy and demos.
pub fn run_ablations(
    inputs: &[SeedInputs],
    domain: &DomainConfig,
    cfg: &RlpdConfig,
    eval_episodes: usize,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for s in inputs {
        let (r, _) = ablate_seed(&s.base, &s.demos, domain, cfg, s.seed, eval_episodes, &Variant::ALL)?;
        r.iter().for_each(&mut on_row);
        rows.extend(r);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub seeds: usize,
    pub mean_success: f64,
    /// Mean over seeds that had at least one success.
    pub mean_cycle_time_s: Option<f64>,
}

pub fn summarize(rows: &[AblationRow]) -> Vec<VariantSummary> {
    Variant::ALL
        .iter()
        .filter_map(|&v| {
            let rs: Vec<&AblationRow> = rows.iter().filter(|r| r.variant == v).collect();
            if rs.is_empty() {
                return None;
            }
            let cts: Vec<f64> = rs.iter().filter_map(|r| r.mean_cycle_time_s).collect();
            Some(VariantSummary {
                variant: v,
                seeds: rs.len(),
                mean_success: rs.iter().map(|r| r.success_rate).sum::<f64>() / rs.len() as f64,
                mean_cycle_time_s: (!cts.is_empty()).then(|| cts.iter().sum::<f64>() / cts.len() as f64),
            })
        })
        .collect()
}

pub fn write_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "seed", "success_rate", "mean_cycle_time_s"])?;
    for r in rows {
        let ct = r.mean_cycle_time_s.map_or(String::new(), |c| c.to_string());
        w.write_record([r.variant.name().to_string(), r.seed.to_string(), r.success_rate.to_string(), ct])?;
    }
    w.flush()?;
    Ok(())
}

/// How often the residual's heading action at first contact opposes the
/// heading error injected into the goal estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct YawSignStat {
    pub agree: usize,
    pub total: usize,
    /// Episodes skipped because the injected heading error was below the
    /// resolution threshold, or contact never happened.
    pub skipped: usize,
    pub fraction: f64,
}

/// Heading errors smaller than this are too small to have a sign.
pub const YAW_SIGN_MIN_ERROR_DEG: f64 = 0.25;

/// Rolls out the stack and scores the residual heading action at first
/// contact against `goal_noisy.θ − goal_true.θ`. The base steers toward the
/// noisy goal, so a correcting residual turns the other way.
pub fn yaw_sign_statistic(
    base: &BasePolicy,
    residual: &ResidualPolicy,
    domain: &DomainConfig,
    n: usize,
    eval_seed: u64,
) -> Result<YawSignStat> {
    let mut stat = YawSignStat::default();
    for i in 0..n {
        let mut state = sim::reset(domain, episode_seed(eval_seed, i));
        let err = wrap_deg(state.goal_pose_noisy.theta - state.goal_pose_true.theta);
        let mut scored = false;
        loop {
            let obs = sim::observe_residual(&mut state, domain);
            let a_b = base_action(Some(base), &state);
            let a_r = residual.mean(&residual.observer.encode(&obs, &state.goal_pose_noisy), &a_b)?;
            if state.contact_wrench != Wrench::ZERO {
                if err.abs() >= YAW_SIGN_MIN_ERROR_DEG {
                    stat.total += 1;
                    if a_r[2] * err < 0.0 {
                        stat.agree += 1;
                    }
                    scored = true;
                }
                break;
            }
            let adv = sim::advance(&state, domain, combine(a_b, a_r)?);
            state = adv.state;
            if adv.done {
                break;
            }
        }
        if !scored {
            stat.skipped += 1;
        }
    }
    stat.fraction = if stat.total == 0 { 0.0 } else { stat.agree as f64 / stat.total as f64 };
    Ok(stat)
}

#[derive(Clone, Debug, Serialize)]
pub struct TransferReport {
    pub zero_shot: EvalReport,
    pub adapted: EvalReport,
    pub yaw_sign: YawSignStat,
    pub demo_attempts: usize,
}

/// Zero-shot evaluation of `base` on `domain`, then demo collection and
/// residual training there, then evaluation of the adapted stack.
pub fn transfer_scenario(
    base: &BasePolicy,
    domain: &DomainConfig,
    cfg: &RlpdConfig,
    n_demos: usize,
    eval_episodes: usize,
    run_seed: u64,
) -> Result<(TransferReport, TrainedResidual)> {
    let eval_seed = seed::derive(run_seed, "transfer-eval", 0);
    let zero_shot = evaluate(Stack::base_only(base), domain, eval_episodes, eval_seed)?;
    let demos = collect_demos(base, domain, n_demos, run_seed, FloorConfig::default())?;
    let cfg = RlpdConfig { obs_mode: ObsMode::Image, ..cfg.clone() };
    let trained = train_residual(Some(base), domain, &demos.trajectories, &cfg, run_seed, |_| {})?;
    let adapted = evaluate(Stack::with_residual(base, &trained.policy), domain, eval_episodes, eval_seed)?;
    let yaw_sign = yaw_sign_statistic(base, &trained.policy, domain, eval_episodes.max(50), eval_seed)?;
    Ok((TransferReport { zero_shot, adapted, yaw_sign, demo_attempts: demos.attempts }, trained))
}
