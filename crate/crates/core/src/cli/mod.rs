//! Experiment commands.
//!
//! Every command reads an experiment config, derives all randomness from
//! its seed, and writes under `<root>/<name>/seed_<s>/`. The root is
//! `--out`, else `RESIDRL_OUT`, else the config's `out`. Existing outputs
//! are only replaced with `--force`.
//!
//! Exit status: 0 ok, 2 config or usage, 3 calibration (success floor or
//! pretraining threshold), 4 missing upstream artifact, 1 anything else.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::base::{pretrain, write_curve, BasePolicy};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, robustness_sweep, run_ablations, summarize, transfer_scenario, write_ablation_csv, EvalReport,
    SeedInputs, Stack, SWEEP_OFFSETS,
};
use crate::residual::demos::{load_demos, save_demos};
use crate::residual::{collect_demos, train_residual, write_metrics, ResidualPolicy};
use crate::seed;
use crate::sim::DomainConfig;

pub use config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CALIBRATION: i32 = 3;
pub const EXIT_MISSING: i32 = 4;

/// Environment variable naming the output root.
pub const OUT_ENV: &str = "RESIDRL_OUT";

#[derive(Parser, Debug)]
#[command(name = "residrl", version, about = "Residual policy adaptation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// Experiment config file.
    pub config: PathBuf,
    /// Output root, overriding the environment and the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(clap::Args, Debug, Clone)]
pub struct SeedArg {
    /// Run seed; defaults to the first configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StackKind {
    Base,
    Residual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DomainKind {
    Sim,
    Real,
    Transfer,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the base policy in the simulation domain.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Harvest successful noisy base rollouts in the real domain.
    CollectDemos {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seed: SeedArg,
        /// Number of successful trajectories.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train a residual on the collected demos.
    TrainResidual {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Evaluate a policy stack and print a JSON summary line.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, value_enum, default_value = "residual")]
        stack: StackKind,
        #[arg(long, value_enum, default_value = "real")]
        domain: DomainKind,
        /// Number of evaluation episodes.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Evaluate a stack with the socket displaced and a stale goal estimate.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, value_enum, default_value = "residual")]
        stack: StackKind,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train and evaluate every ablation variant across seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// A count `N` (seeds 0..N) or a comma-separated list.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Adapt the base policy to the transfer domain.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seed: SeedArg,
    },
}

/// Parses `--seeds`: a bare count means `0..N`, anything with a comma is an
/// explicit list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidConfig(format!("--seeds: expected a count or a comma list, got `{text}`"));
    let seeds: Vec<u64> = if text.contains(',') {
        text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    } else {
        let n: u64 = text.trim().parse().map_err(|_| bad())?;
        (0..n).collect()
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// Maps an error to its exit status.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::InvalidConfig(_) | Error::OutputExists(_) => EXIT_CONFIG,
        Error::SuccessFloor { .. } | Error::ThresholdNotReached { .. } => EXIT_CALIBRATION,
        Error::MissingArtifact(_) => EXIT_MISSING,
        _ => EXIT_OTHER,
    }
}

/// Loaded config plus the resolved output root.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub root: PathBuf,
    pub force: bool,
}

impl Context {
    /// Any failure while reading the config is a config error, whatever
    /// its underlying cause.
    pub fn load(common: &Common) -> std::result::Result<Self, (i32, Error)> {
        let cfg = ExperimentConfig::load(&common.config).map_err(|e| (EXIT_CONFIG, e))?;
        let base = common
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| cfg.out.clone());
        let root = base.join(&cfg.name);
        Ok(Context { cfg, root, force: common.force })
    }

    pub fn seed(&self, arg: &SeedArg) -> u64 {
        arg.seed.unwrap_or(self.cfg.seeds[0])
    }

    pub fn seed_dir(&self, s: u64) -> PathBuf {
        self.root.join(format!("seed_{s}"))
    }

    fn domain(&self, kind: DomainKind) -> &DomainConfig {
        match kind {
            DomainKind::Sim => &self.cfg.sim_domain,
            DomainKind::Real => &self.cfg.real_domain,
            DomainKind::Transfer => &self.cfg.transfer_domain,
        }
    }

    /// Fails if any output exists and `--force` was not given.
    fn claim(&self, outputs: &[&Path]) -> Result<()> {
        if !self.force {
            if let Some(p) = outputs.iter().find(|p| p.exists()) {
                return Err(Error::OutputExists(p.to_path_buf()));
            }
        }
        for p in outputs {
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent)?;
            }
        }
        Ok(())
    }
}

fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load_base(dir: &Path) -> Result<BasePolicy> {
    BasePolicy::load(&dir.join(BASE_CKPT))
}

pub const BASE_CKPT: &str = "base.ckpt";
pub const BASE_CURVE: &str = "base_curve.csv";
pub const DEMO_DIR: &str = "demos";
pub const MANIFEST: &str = "manifest.json";
pub const RESIDUAL_CKPT: &str = "residual.ckpt";
pub const RESIDUAL_METRICS: &str = "residual_metrics.csv";
pub const RESIDUAL_SUMMARY: &str = "residual.json";
pub const TRANSFER_REPORT: &str = "transfer.json";
pub const TRANSFER_CKPT: &str = "transfer_residual.ckpt";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const ABLATION_SUMMARY: &str = "ablation_summary.json";

#[derive(Serialize)]
struct PretrainSummary {
    seed: u64,
    env_steps: usize,
    best_eval: f64,
    reached: bool,
    param_hash: String,
}

pub fn cmd_pretrain(ctx: &Context, s: u64) -> Result<()> {
    let dir = ctx.seed_dir(s);
    let ckpt = dir.join(BASE_CKPT);
    let curve = dir.join(BASE_CURVE);
    ctx.claim(&[&ckpt, &curve])?;
    let run = pretrain(&ctx.cfg.ppo, &ctx.cfg.sim_domain, s, |r| {
        if let Some(e) = r.eval_success {
            eprintln!("pretrain seed {s}: {} env steps, eval success {e:.3}", r.env_steps);
        }
    })?;
    run.checkpoint(s).save(&ckpt)?;
    write_curve(&run.curve, &curve)?;
    write_json(
        &PretrainSummary {
            seed: s,
            env_steps: run.env_steps,
            best_eval: run.best_eval,
            reached: run.reached,
            param_hash: run.policy.param_hash(),
        },
        &dir.join("base.json"),
    )?;
    run.ensure_reached(ctx.cfg.ppo.target_success)
}

#[derive(Serialize)]
struct DemoManifest {
    seed: u64,
    n: usize,
    attempts: usize,
    /// Fraction of noisy rollouts that succeeded.
    zero_shot_success: f64,
    base_hash: String,
    lengths: Vec<usize>,
    files: Vec<String>,
}

pub fn cmd_collect_demos(ctx: &Context, s: u64, n: usize) -> Result<()> {
    let dir = ctx.seed_dir(s);
    let base = load_base(&dir)?;
    let demo_dir = dir.join(DEMO_DIR);
    ctx.claim(&[&demo_dir])?;
    let coll = collect_demos(&base, &ctx.cfg.real_domain, n, s, ctx.cfg.floor)?;
    if demo_dir.exists() {
        fs::remove_dir_all(&demo_dir)?;
    }
    let files = save_demos(&coll.trajectories, &demo_dir)?;
    let manifest = DemoManifest {
        seed: s,
        n: coll.trajectories.len(),
        attempts: coll.attempts,
        zero_shot_success: coll.trajectories.len() as f64 / coll.attempts as f64,
        base_hash: base.param_hash(),
        lengths: coll.trajectories.iter().map(|t| t.len()).collect(),
        files: files.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).collect(),
    };
    write_json(&manifest, &demo_dir.join(MANIFEST))?;
    eprintln!("collected {} demos in {} attempts", manifest.n, manifest.attempts);
    Ok(())
}

#[derive(Serialize)]
struct ResidualSummary {
    seed: u64,
    obs_mode: &'static str,
    env_steps: usize,
    episodes: usize,
    online_successes: usize,
    admitted: usize,
    final_success: f64,
    final_cycle_time_s: f64,
    demo_lengths: Vec<usize>,
    param_hash: String,
}

pub fn cmd_train_residual(ctx: &Context, s: u64) -> Result<()> {
    let dir = ctx.seed_dir(s);
    let base = load_base(&dir)?;
    let demos = load_demos(&dir.join(DEMO_DIR))?;
    let (ckpt, metrics, summary) = (dir.join(RESIDUAL_CKPT), dir.join(RESIDUAL_METRICS), dir.join(RESIDUAL_SUMMARY));
    ctx.claim(&[&ckpt, &metrics, &summary])?;
    let out = train_residual(Some(&base), &ctx.cfg.real_domain, &demos, &ctx.cfg.rlpd, s, |r| {
        eprintln!("residual seed {s}: step {} success {:.2}", r.env_step, r.eval_success);
    })?;
    out.policy.checkpoint(s).save(&ckpt)?;
    write_metrics(&out.metrics, &metrics)?;
    let last = out.metrics.last().expect("training always logs the initial evaluation");
    write_json(
        &ResidualSummary {
            seed: s,
            obs_mode: ctx.cfg.rlpd.obs_mode.name(),
            env_steps: out.env_steps,
            episodes: out.episodes,
            online_successes: out.online_successes,
            admitted: out.admitted,
            final_success: last.eval_success,
            final_cycle_time_s: last.mean_cycle_time_s,
            demo_lengths: out.demo_lengths,
            param_hash: out.policy.param_hash(),
        },
        &summary,
    )
}

#[derive(Serialize)]
pub struct EvalLine {
    pub seed: u64,
    pub stack: &'static str,
    pub domain: &'static str,
    pub n_episodes: usize,
    pub success_rate: f64,
    pub mean_cycle_time_s: Option<f64>,
}

fn stack_name(k: StackKind) -> &'static str {
    match k {
        StackKind::Base => "base",
        StackKind::Residual => "residual",
    }
}

fn domain_name(k: DomainKind) -> &'static str {
    match k {
        DomainKind::Sim => "sim",
        DomainKind::Real => "real",
        DomainKind::Transfer => "transfer",
    }
}

fn load_residual(dir: &Path, kind: StackKind) -> Result<Option<ResidualPolicy>> {
    match kind {
        StackKind::Base => Ok(None),
        StackKind::Residual => ResidualPolicy::load(&dir.join(RESIDUAL_CKPT)).map(Some),
    }
}

/// Evaluates and returns the summary line printed on standard output.
pub fn cmd_eval(ctx: &Context, s: u64, stack: StackKind, domain: DomainKind, n: usize) -> Result<EvalLine> {
    let dir = ctx.seed_dir(s);
    let base = load_base(&dir)?;
    let residual = load_residual(&dir, stack)?;
    let report_path = dir.join(format!("eval_{}_{}.json", stack_name(stack), domain_name(domain)));
    ctx.claim(&[&report_path])?;
    let st = Stack { base: Some(&base), residual: residual.as_ref() };
    let report: EvalReport = evaluate(st, ctx.domain(domain), n, seed::derive(s, "cli-eval", 0))?;
    write_json(&report, &report_path)?;
    Ok(EvalLine {
        seed: s,
        stack: stack_name(stack),
        domain: domain_name(domain),
        n_episodes: report.n_episodes,
        success_rate: report.success_rate,
        mean_cycle_time_s: report.mean_cycle_time_s,
    })
}

pub fn cmd_sweep(ctx: &Context, s: u64, stack: StackKind, n: usize) -> Result<()> {
    let dir = ctx.seed_dir(s);
    let base = load_base(&dir)?;
    let residual = load_residual(&dir, stack)?;
    let path = dir.join(format!("sweep_{}.json", stack_name(stack)));
    ctx.claim(&[&path])?;
    let st = Stack { base: Some(&base), residual: residual.as_ref() };
    let grid = robustness_sweep(st, &ctx.cfg.real_domain, &SWEEP_OFFSETS, n, seed::derive(s, "cli-sweep", 0))?;
    for c in &grid.cells {
        eprintln!("offset ({:+}, {:+}) mm: success {:.2}", c.dx_mm, c.dy_mm, c.report.success_rate);
    }
    write_json(&grid, &path)
}

pub fn cmd_ablate(ctx: &Context, seeds: &[u64]) -> Result<()> {
    let csv_path = ctx.root.join(ABLATION_CSV);
    let summary_path = ctx.root.join(ABLATION_SUMMARY);
    let mut inputs = Vec::with_capacity(seeds.len());
    for &s in seeds {
        let dir = ctx.seed_dir(s);
        inputs.push(SeedInputs { seed: s, base: load_base(&dir)?, demos: load_demos(&dir.join(DEMO_DIR))? });
    }
    ctx.claim(&[&csv_path, &summary_path])?;
    let rows = run_ablations(&inputs, &ctx.cfg.real_domain, &ctx.cfg.rlpd, ctx.cfg.eval_episodes, |r| {
        eprintln!("ablation seed {} {}: success {:.2}", r.seed, r.variant.name(), r.success_rate);
    })?;
    write_ablation_csv(&rows, &csv_path)?;
    write_json(&summarize(&rows), &summary_path)
}

pub fn cmd_transfer(ctx: &Context, s: u64) -> Result<()> {
    let dir = ctx.seed_dir(s);
    let base = load_base(&dir)?;
    let (report, ckpt) = (dir.join(TRANSFER_REPORT), dir.join(TRANSFER_CKPT));
    ctx.claim(&[&report, &ckpt])?;
    let (rep, trained) = transfer_scenario(
        &base,
        &ctx.cfg.transfer_domain,
        &ctx.cfg.rlpd,
        ctx.cfg.n_demos,
        ctx.cfg.eval_episodes,
        s,
    )?;
    trained.policy.checkpoint(s).save(&ckpt)?;
    eprintln!(
        "transfer: zero-shot {:.2}, adapted {:.2}, yaw sign agreement {:.2}",
        rep.zero_shot.success_rate, rep.adapted.success_rate, rep.yaw_sign.fraction
    );
    write_json(&rep, &report)
}

fn dispatch(cmd: Command) -> std::result::Result<(), (i32, Error)> {
    let with = |common: &Common, f: &mut dyn FnMut(&Context) -> Result<()>| -> std::result::Result<(), (i32, Error)> {
        let ctx = Context::load(common)?;
        f(&ctx).map_err(|e| (exit_code(&e), e))
    };
    match cmd {
        Command::Pretrain { common, seed } => with(&common, &mut |c| cmd_pretrain(c, c.seed(&seed))),
        Command::CollectDemos { common, seed, n } => {
            with(&common, &mut |c| cmd_collect_demos(c, c.seed(&seed), n.unwrap_or(c.cfg.n_demos)))
        }
        Command::TrainResidual { common, seed } => with(&common, &mut |c| cmd_train_residual(c, c.seed(&seed))),
        Command::Eval { common, seed, stack, domain, n } => with(&common, &mut |c| {
            let line = cmd_eval(c, c.seed(&seed), stack, domain, n.unwrap_or(c.cfg.eval_episodes))?;
            println!("{}", serde_json::to_string(&line)?);
            Ok(())
        }),
        Command::Sweep { common, seed, stack, n } => {
            with(&common, &mut |c| cmd_sweep(c, c.seed(&seed), stack, n.unwrap_or(c.cfg.eval_episodes)))
        }
        Command::Ablate { common, seeds } => with(&common, &mut |c| {
            let list = match &seeds {
                Some(t) => parse_seeds(t)?,
                None => c.cfg.seeds.clone(),
            };
            cmd_ablate(c, &list)
        }),
        Command::Transfer { common, seed } => with(&common, &mut |c| cmd_transfer(c, c.seed(&seed))),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err((code, e)) => {
            eprintln!("error: {e}");
            code
        }
    }
}
