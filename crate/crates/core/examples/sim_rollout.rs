//! Drives the peg straight at its noisy goal estimate in the nominal and the
//! real domain, printing the contact wrench along the way and saving the
//! final camera images as PGM files.
//!
//! ```text
//! cargo run --release --example sim_rollout -- [episode_seed] [out_dir]
//! ```

use std::path::PathBuf;

use residrl::geom::clamp_action;
use residrl::sim::{self, render, DomainConfig, View};

fn main() -> residrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let episode_seed: u64 = args.next().map_or(3, |s| s.parse().expect("episode seed"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(std::env::temp_dir);

    for (name, domain) in [("nominal", DomainConfig::nominal()), ("real", DomainConfig::real())] {
        let mut state = sim::reset(&domain, episode_seed);
        let mut peak_force: f64 = 0.0;
        loop {
            // proportional step toward the estimate, in units of the action scale
            let g = state.goal_pose_noisy;
            let e = state.ee_pose;
            let a = clamp_action([
                (g.x - e.x) / domain.action_scale_trans,
                (g.y - e.y) / domain.action_scale_trans,
                (g.theta - e.theta) / domain.action_scale_rot,
            ])?;
            let r = sim::step(&state, &domain, a);
            state = r.state;
            let w = state.contact_wrench;
            peak_force = peak_force.max(w.fx.hypot(w.fy));
            if state.step_count % 10 == 0 || r.done {
                println!(
                    "{name:8} step {:3} ee ({:7.2}, {:7.2}, {:6.2}) wrench ({:8.2}, {:8.2}, {:9.1})",
                    state.step_count, e.x, e.y, e.theta, w.fx, w.fy, w.tau
                );
            }
            if r.done {
                let (t, rot) = residrl::geom::pose_error(state.ee_pose, state.goal_pose_true);
                println!(
                    "{name}: success={} after {} steps, final error {t:.2} mm / {rot:.2} deg, peak force {peak_force:.1}",
                    r.success, state.step_count
                );
                for view in [View::Front, View::Wrist] {
                    let path = out.join(format!("rollout_{name}_{view:?}.pgm").to_lowercase());
                    render::save_pgm(&render::render(&domain, &state.ee_pose, view), &path)?;
                    println!("wrote {}", path.display());
                }
                break;
            }
        }
    }
    Ok(())
}
