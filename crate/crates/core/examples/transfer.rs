//! Takes a base policy trained on the square peg to the rectangular-peg
//! domain, adapts it there and reports how often the learned yaw correction
//! opposes the heading error at first contact.
//!
//! ```text
//! cargo run --release --example transfer -- [seed] [max_env_steps]
//! ```

use residrl::base::{pretrain, PpoConfig};
use residrl::eval::transfer_scenario;
use residrl::residual::rlpd::RlpdConfig;
use residrl::sim::DomainConfig;

fn main() -> residrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let mut cfg = RlpdConfig::default();
    if let Some(steps) = args.next() {
        cfg.max_env_steps = steps.parse().expect("max_env_steps");
    }
    let base = pretrain(&PpoConfig::default(), &DomainConfig::nominal(), seed, |_| {})?.policy;
    let (report, _) = transfer_scenario(&base, &DomainConfig::transfer(), &cfg, 20, 20, seed)?;
    println!("zero-shot success {:.2}", report.zero_shot.success_rate);
    println!("demo attempts     {}", report.demo_attempts);
    println!("adapted success   {:.2}", report.adapted.success_rate);
    let y = &report.yaw_sign;
    println!("yaw sign agreement {}/{} = {:.2} ({} episodes skipped)", y.agree, y.total, y.fraction, y.skipped);
    Ok(())
}
