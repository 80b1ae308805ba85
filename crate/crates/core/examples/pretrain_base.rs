//! Pretrains a state-based base policy in the nominal domain and reports
//! its evaluation curve.
//!
//! ```text
//! cargo run --release --example pretrain_base -- [seed] [total_env_steps]
//! ```

use std::time::Instant;

use residrl::base::{pretrain, PpoConfig};
use residrl::sim::DomainConfig;

fn main() -> residrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let mut cfg = PpoConfig::default();
    if let Some(steps) = args.next() {
        cfg.total_env_steps = steps.parse().expect("total_env_steps");
    }
    let t0 = Instant::now();
    let run = pretrain(&cfg, &DomainConfig::nominal(), seed, |row| {
        let eval = row.eval_success.map_or(String::new(), |s| format!(" eval_success={s:.2}"));
        println!(
            "iter {:4} steps {:8} mean_reward {:8.3}{eval} ({:.0}s)",
            row.iteration,
            row.env_steps,
            row.mean_reward,
            t0.elapsed().as_secs_f64()
        );
    })?;
    println!("best eval success {:.2} after {} env steps", run.best_eval, run.env_steps);
    println!("parameter hash {}", run.policy.param_hash());
    Ok(())
}
