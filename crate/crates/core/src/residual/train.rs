//! Online residual training loop.

use std::path::Path;

use serde::Serialize;

use crate::base::{BasePolicy, EvalSummary};
use crate::error::{Error, Result};
use crate::nn::gaussian::sample;
use crate::residual::demos::DemoTrajectory;
use crate::residual::replay::{ReplayStore, Transition};
use crate::residual::rlpd::{rlpd_update, Learner, RlpdConfig, UpdateLosses};
use crate::residual::{base_action, combine, evaluate_combined, Observer, ResidualPolicy};
use crate::seed;
use crate::sim::{self, DomainConfig};

/// One evaluation point of a training run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub env_step: usize,
    pub eval_success: f64,
    /// Mean duration of successful evaluation episodes, seconds.
    pub mean_cycle_time_s: f64,
    pub demo_median_len: f64,
}

pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainedResidual {
    pub policy: ResidualPolicy,
    pub metrics: Vec<MetricsRow>,
    pub final_eval: EvalSummary,
    pub env_steps: usize,
    pub episodes: usize,
    pub online_successes: usize,
    /// Online successes admitted to the demo buffer.
    pub admitted: usize,
    /// Updates whose batch came entirely from demos (empty online buffer).
    pub warmup_batches: usize,
    pub demo_lengths: Vec<usize>,
    pub last_losses: UpdateLosses,
}

fn eval_row(
    base: Option<&BasePolicy>,
    policy: &ResidualPolicy,
    domain: &DomainConfig,
    cfg: &RlpdConfig,
    eval_seed: u64,
    env_step: usize,
    store: &ReplayStore,
) -> Result<(MetricsRow, EvalSummary)> {
    let e = evaluate_combined(base, Some(policy), domain, cfg.eval_episodes, eval_seed)?;
    let row = MetricsRow {
        env_step,
        eval_success: e.success_rate,
        mean_cycle_time_s: e.mean_success_steps * domain.control_dt,
        demo_median_len: store.demo_median().unwrap_or(0.0),
    };
    Ok((row, e))
}

/// Trains a residual on top of `base` (or on its own when `base` is `None`,
/// in which case demos should already be relabelled) for
/// `cfg.max_env_steps` environment steps, evaluating every
/// `cfg.eval_every` steps and at the end.
pub fn train_residual(
    base: Option<&BasePolicy>,
    domain: &DomainConfig,
    demos: &[DemoTrajectory],
    cfg: &RlpdConfig,
    run_seed: u64,
    mut on_row: impl FnMut(&MetricsRow),
) -> Result<TrainedResidual> {
    cfg.validate()?;
    domain.validate()?;
    if demos.is_empty() {
        return Err(Error::InvalidConfig("residual training needs at least one demo trajectory".into()));
    }
    let observer = Observer::new(cfg.obs_mode, seed::derive(run_seed, "encoder", 0));
    let mut init_rng = seed::stream(run_seed, "residual-init", 0);
    let actor = ResidualPolicy::new(observer.clone(), cfg.base_input, &cfg.hidden, cfg.init_log_std, &mut init_rng);
    let mut learner = Learner::new(actor, cfg, &mut init_rng);
    let mut store = ReplayStore::new(cfg.demo_capacity, cfg.online_capacity);
    for d in demos {
        store.push_demo(d.transitions(&observer));
    }
    let mut act_rng = seed::stream(run_seed, "residual-act", 0);
    let mut update_rng = seed::stream(run_seed, "residual-update", 0);
    let eval_seed = seed::derive(run_seed, "residual-eval", 0);

    let (row, mut final_eval) = eval_row(base, &learner.actor, domain, cfg, eval_seed, 0, &store)?;
    on_row(&row);
    let mut metrics = vec![row];

    let mut episodes = 0usize;
    let mut online_successes = 0usize;
    let mut admitted = 0usize;
    let mut warmup_batches = 0usize;
    let mut last_losses = UpdateLosses::default();

    let mut state = sim::reset(domain, seed::derive(run_seed, "residual-episode", 0));
    let mut obs = sim::observe_residual(&mut state, domain);
    let mut enc = observer.encode(&obs, &state.goal_pose_noisy);
    let mut a_b = base_action(base, &state);
    let mut traj: Vec<Transition> = Vec::new();

    for env_step in 1..=cfg.max_env_steps {
        let (mean, std) = learner.actor.distribution(&enc, &a_b)?;
        let (a, _) = sample(&mean, &std, &mut act_rng);
        let a_r = [a[0], a[1], a[2]];
        let adv = sim::advance(&state, domain, combine(a_b, a_r)?);
        state = adv.state;
        obs = sim::observe_residual(&mut state, domain);
        let next_enc = observer.encode(&obs, &state.goal_pose_noisy);
        let next_ab = base_action(base, &state);
        let t = Transition {
            obs: enc,
            base_action: a_b,
            residual_action: a_r,
            reward: if adv.success { 1.0 } else { 0.0 },
            done: adv.success || adv.aborted,
            next_obs: next_enc.clone(),
            next_base_action: next_ab,
        };
        store.push_online(t.clone());
        traj.push(t);
        enc = next_enc;
        a_b = next_ab;

        for _ in 0..cfg.utd_ratio {
            let (batch, counts) = store.symmetric_sample(cfg.batch_size, &mut update_rng);
            if counts.online == 0 {
                warmup_batches += 1;
            }
            last_losses = rlpd_update(&mut learner, &batch, cfg, &mut update_rng)?;
        }

        if adv.done {
            episodes += 1;
            if adv.success {
                online_successes += 1;
                if cfg.demo_gate && store.offer_demo(&traj) {
                    admitted += 1;
                }
            }
            traj.clear();
            state = sim::reset(domain, seed::derive(run_seed, "residual-episode", episodes as u64));
            obs = sim::observe_residual(&mut state, domain);
            enc = observer.encode(&obs, &state.goal_pose_noisy);
            a_b = base_action(base, &state);
        }

        if env_step % cfg.eval_every == 0 || env_step == cfg.max_env_steps {
            let (row, e) = eval_row(base, &learner.actor, domain, cfg, eval_seed, env_step, &store)?;
            on_row(&row);
            metrics.push(row);
            final_eval = e;
        }
    }

    Ok(TrainedResidual {
        policy: learner.actor,
        metrics,
        final_eval,
        env_steps: cfg.max_env_steps,
        episodes,
        online_successes,
        admitted,
        warmup_batches,
        demo_lengths: store.demo_lengths(),
        last_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residual::demos::rollout_demo;
    use crate::residual::ObsMode;

    fn setup() -> (BasePolicy, DomainConfig, Vec<DemoTrajectory>) {
        let domain = DomainConfig::real();
        let base = BasePolicy::new_random(&[16], -1.0, &mut seed::stream(0, "tb", 0));
        let demos = (0..2).map(|i| rollout_demo(&base, &domain, i).unwrap()).collect();
        (base, domain, demos)
    }

    fn small() -> RlpdConfig {
        RlpdConfig {
            hidden: vec![16, 16],
            batch_size: 8,
            utd_ratio: 1,
            eval_episodes: 2,
            eval_every: 50,
            obs_mode: ObsMode::State,
            ..Default::default()
        }
    }

    #[test]
    fn zero_budget_returns_the_initial_residual() {
        let (base, domain, demos) = setup();
        let cfg = RlpdConfig { max_env_steps: 0, ..small() };
        let out = train_residual(Some(&base), &domain, &demos, &cfg, 5, |_| {}).unwrap();
        let observer = Observer::new(cfg.obs_mode, seed::derive(5, "encoder", 0));
        let init = ResidualPolicy::new(observer, true, &cfg.hidden, cfg.init_log_std, &mut seed::stream(5, "residual-init", 0));
        assert_eq!(out.policy.param_hash(), init.param_hash());
        assert_eq!(out.metrics.len(), 1);
        assert_eq!(out.metrics[0].env_step, 0);
    }

    #[test]
    fn short_run_is_reproducible_and_logs_metrics() {
        let (base, domain, demos) = setup();
        let cfg = RlpdConfig { max_env_steps: 120, ..small() };
        let a = train_residual(Some(&base), &domain, &demos, &cfg, 6, |_| {}).unwrap();
        let b = train_residual(Some(&base), &domain, &demos, &cfg, 6, |_| {}).unwrap();
        assert_eq!(a.policy.param_hash(), b.policy.param_hash());
        assert_eq!(a.metrics, b.metrics);
        let steps: Vec<usize> = a.metrics.iter().map(|r| r.env_step).collect();
        assert_eq!(steps, vec![0, 50, 100, 120]);
        // each step is stored before its updates, so no batch is demo-only
        assert_eq!(a.warmup_batches, 0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics(&a.metrics, &p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("env_step,eval_success,mean_cycle_time_s,demo_median_len\n"));
    }

    #[test]
    fn no_demos_is_rejected() {
        let (base, domain, _) = setup();
        assert!(train_residual(Some(&base), &domain, &[], &small(), 0, |_| {}).is_err());
    }
}
