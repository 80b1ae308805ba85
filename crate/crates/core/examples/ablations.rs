//! Trains every ablation variant on shared base policies and demos and
//! prints per-seed rows plus the per-variant means as CSV-ready text.
//!
//! ```text
//! cargo run --release --example ablations -- [n_seeds] [max_env_steps]
//! ```

use residrl::base::{pretrain, PpoConfig};
use residrl::eval::{run_ablations, summarize, SeedInputs};
use residrl::residual::rlpd::RlpdConfig;
use residrl::residual::{collect_demos, FloorConfig};
use residrl::sim::DomainConfig;

fn main() -> residrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_seeds: u64 = args.next().map_or(2, |s| s.parse().expect("n_seeds"));
    let mut cfg = RlpdConfig::default();
    if let Some(steps) = args.next() {
        cfg.max_env_steps = steps.parse().expect("max_env_steps");
    }
    let real = DomainConfig::real();
    let mut inputs = Vec::new();
    for seed in 0..n_seeds {
        let base = pretrain(&PpoConfig::default(), &DomainConfig::nominal(), seed, |_| {})?.policy;
        let demos = collect_demos(&base, &real, 20, seed, FloorConfig::default())?.trajectories;
        inputs.push(SeedInputs { seed, base, demos });
    }
    println!("variant,seed,success_rate,mean_cycle_time_s");
    let rows = run_ablations(&inputs, &real, &cfg, 20, |r| {
        let cycle = r.mean_cycle_time_s.map_or(String::new(), |c| format!("{c:.3}"));
        println!("{},{},{:.2},{cycle}", r.variant.name(), r.seed, r.success_rate);
    })?;
    println!();
    for s in summarize(&rows) {
        println!("{:22} mean success {:.3} over {} seeds", s.variant.name(), s.mean_success, s.seeds);
    }
    Ok(())
}
