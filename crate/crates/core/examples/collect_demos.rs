//! Pretrains a base policy, harvests successful noisy rollouts of it in the
//! real domain and writes them as demo files.
//!
//! ```text
//! cargo run --release --example collect_demos -- [seed] [n] [out_dir]
//! ```

use std::path::PathBuf;

use residrl::base::{pretrain, PpoConfig};
use residrl::residual::demos::{load_demos, save_demos};
use residrl::residual::{collect_demos, median, FloorConfig};
use residrl::sim::DomainConfig;

fn main() -> residrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let n: usize = args.next().map_or(20, |s| s.parse().expect("n"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("residrl_demos"));

    let base = pretrain(&PpoConfig::default(), &DomainConfig::nominal(), seed, |_| {})?.policy;
    let real = DomainConfig::real();
    let coll = collect_demos(&base, &real, n, seed, FloorConfig::default())?;
    let lengths: Vec<usize> = coll.trajectories.iter().map(|t| t.len()).collect();
    println!(
        "{} successes in {} attempts ({:.2}); median length {:.1} steps",
        lengths.len(),
        coll.attempts,
        lengths.len() as f64 / coll.attempts as f64,
        median(&lengths).unwrap_or(0.0)
    );

    if out.exists() {
        std::fs::remove_dir_all(&out)?;
    }
    let files = save_demos(&coll.trajectories, &out)?;
    let back = load_demos(&out)?;
    assert_eq!(back, coll.trajectories);
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}
