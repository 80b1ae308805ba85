//! Full adaptation on one seed: base pretraining in the nominal domain,
//! demo collection and residual training in the real domain, then a
//! comparison of the base and the adapted stack.
//!
//! ```text
//! cargo run --release --example train_residual -- [seed] [max_env_steps] [state|image]
//! ```

use residrl::base::{pretrain, PpoConfig};
use residrl::eval::{evaluate, Stack};
use residrl::residual::rlpd::RlpdConfig;
use residrl::residual::{collect_demos, train_residual, FloorConfig, ObsMode};
use residrl::sim::DomainConfig;

fn main() -> residrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let mut cfg = RlpdConfig::default();
    if let Some(steps) = args.next() {
        cfg.max_env_steps = steps.parse().expect("max_env_steps");
    }
    if let Some(mode) = args.next() {
        cfg.obs_mode = mode.parse::<ObsMode>()?;
    }

    let base = pretrain(&PpoConfig::default(), &DomainConfig::nominal(), seed, |_| {})?.policy;
    let real = DomainConfig::real();
    let demos = collect_demos(&base, &real, 20, seed, FloorConfig::default())?;
    println!("collected 20 demos in {} attempts", demos.attempts);

    let out = train_residual(Some(&base), &real, &demos.trajectories, &cfg, seed, |r| {
        println!(
            "step {:6} success {:.2} cycle {:.2}s demo median {:.1}",
            r.env_step, r.eval_success, r.mean_cycle_time_s, r.demo_median_len
        );
    })?;
    println!(
        "{} episodes, {} online successes, {} admitted as demos",
        out.episodes, out.online_successes, out.admitted
    );

    let before = evaluate(Stack::base_only(&base), &real, 50, 99)?;
    let after = evaluate(Stack::with_residual(&base, &out.policy), &real, 50, 99)?;
    for (name, r) in [("base", &before), ("base+residual", &after)] {
        let cycle = r.mean_cycle_time_s.map_or("-".into(), |c| format!("{c:.2}s"));
        println!("{name:14} success {:.2} cycle {cycle}", r.success_rate);
    }
    Ok(())
}
