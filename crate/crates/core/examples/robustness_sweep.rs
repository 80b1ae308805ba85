//! Moves the socket 20 mm in each cardinal direction without updating the
//! goal estimate and compares how image- and state-conditioned residuals
//! cope, next to the base policy alone.
//!
//! ```text
//! cargo run --release --example robustness_sweep -- [seed] [max_env_steps]
//! ```

use residrl::base::{pretrain, PpoConfig};
use residrl::eval::{robustness_sweep, RobustnessGrid, Stack, SWEEP_OFFSETS};
use residrl::residual::rlpd::RlpdConfig;
use residrl::residual::{collect_demos, train_residual, FloorConfig, ObsMode};
use residrl::sim::DomainConfig;

fn print_grid(name: &str, g: &RobustnessGrid) {
    let cells: Vec<String> = g
        .cells
        .iter()
        .map(|c| format!("({:+},{:+}) {:.2}", c.dx_mm, c.dy_mm, c.report.success_rate))
        .collect();
    println!("{name:6} {}  displaced mean {:.2}", cells.join("  "), g.displaced_success());
}

fn main() -> residrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let mut cfg = RlpdConfig::default();
    if let Some(steps) = args.next() {
        cfg.max_env_steps = steps.parse().expect("max_env_steps");
    }

    let base = pretrain(&PpoConfig::default(), &DomainConfig::nominal(), seed, |_| {})?.policy;
    let real = DomainConfig::real();
    let demos = collect_demos(&base, &real, 20, seed, FloorConfig::default())?.trajectories;
    let image = train_residual(Some(&base), &real, &demos, &RlpdConfig { obs_mode: ObsMode::Image, ..cfg.clone() }, seed, |_| {})?;
    let state = train_residual(Some(&base), &real, &demos, &RlpdConfig { obs_mode: ObsMode::State, ..cfg }, seed, |_| {})?;

    let n = 20;
    print_grid("image", &robustness_sweep(Stack::with_residual(&base, &image.policy), &real, &SWEEP_OFFSETS, n, seed)?);
    print_grid("state", &robustness_sweep(Stack::with_residual(&base, &state.policy), &real, &SWEEP_OFFSETS, n, seed)?);
    print_grid("base", &robustness_sweep(Stack::base_only(&base), &real, &SWEEP_OFFSETS, n, seed)?);
    Ok(())
}
