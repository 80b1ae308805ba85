//! Deterministic planar peg-in-hole simulator.
//!
//! The end-effector is a virtual mass/inertia pulled toward a pose target by
//! an impedance law, with penalty contact against a three-block socket, and
//! integrated with semi-implicit Euler. Each control step applies one
//! incremental target command and runs `control_dt / physics_dt` substeps.

pub mod config;
pub mod contact;
pub mod render;

use image::GrayImage;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::geom::{pose_error, wrap_deg, ActionDelta, Pose2, Twist2};
use crate::seed::{self, Rng};

pub use config::{DomainConfig, PegShape};
pub use contact::Wrench;
pub use render::View;

/// Translation success threshold, mm.
pub const SUCCESS_TRANS_MM: f64 = 3.0;
/// Rotation success threshold, deg.
pub const SUCCESS_ROT_DEG: f64 = 5.0;

/// Raw simulator state.
///
/// `goal_pose_true` is the end-effector pose at full insertion in the true
/// socket; `goal_pose_noisy` is the estimate handed to state-based policies.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub ee_pose: Pose2,
    pub ee_twist: Twist2,
    pub target_pose: Pose2,
    pub goal_pose_true: Pose2,
    pub goal_pose_noisy: Pose2,
    pub contact_wrench: Wrench,
    pub step_count: usize,
    noise_rng: Rng,
}

/// Observation for the state-based base policy. Carries the noisy goal and
/// never image data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseObs {
    pub ee_pose: Pose2,
    pub ee_twist: Twist2,
    pub goal_pose_noisy: Pose2,
    pub goal_minus_ee: [f64; 3],
}

impl BaseObs {
    pub const DIM: usize = 12;

    pub fn from_state(s: &SimState) -> Self {
        let g = s.goal_pose_noisy;
        let e = s.ee_pose;
        BaseObs {
            ee_pose: e,
            ee_twist: s.ee_twist,
            goal_pose_noisy: g,
            goal_minus_ee: [g.x - e.x, g.y - e.y, wrap_deg(g.theta - e.theta)],
        }
    }

    /// Scaled feature vector fed to the base policy.
    pub fn to_vec(&self) -> Vec<f64> {
        let p = self.ee_pose;
        let t = self.ee_twist;
        let g = self.goal_pose_noisy;
        let d = self.goal_minus_ee;
        vec![
            p.x / 20.0,
            p.y / 20.0,
            p.theta / 10.0,
            t.vx / 50.0,
            t.vy / 50.0,
            t.omega / 50.0,
            g.x / 20.0,
            g.y / 20.0,
            g.theta / 10.0,
            d[0] / 5.0,
            d[1] / 5.0,
            d[2] / 5.0,
        ]
    }
}

/// Observation for the residual policy: proprioception, sensed wrench and
/// two camera images. It has no goal or socket pose.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualObs {
    pub ee_pose: Pose2,
    pub ee_twist: Twist2,
    pub contact_wrench: [f64; 3],
    pub image_front: GrayImage,
    pub image_wrist: GrayImage,
}

impl ResidualObs {
    pub const PROPRIO_DIM: usize = 9;

    /// Scaled pose, twist and wrench.
    pub fn proprio(&self) -> [f64; 9] {
        let p = self.ee_pose;
        let t = self.ee_twist;
        let w = self.contact_wrench;
        [
            p.x / 20.0,
            p.y / 20.0,
            p.theta / 10.0,
            t.vx / 50.0,
            t.vy / 50.0,
            t.omega / 50.0,
            w[0] / 100.0,
            w[1] / 100.0,
            w[2] / 2000.0,
        ]
    }
}

/// Outcome of one control step.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub state: SimState,
    pub base_obs: BaseObs,
    pub residual_obs: ResidualObs,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub aborted: bool,
}

/// Outcome of [`advance`], which skips rendering.
#[derive(Clone, Debug)]
pub struct Advance {
    pub state: SimState,
    pub success: bool,
    pub aborted: bool,
    pub done: bool,
}

/// Samples the noisy goal and places the end-effector `approach_height`
/// above it along the insertion axis, at rest.
pub fn reset(cfg: &DomainConfig, rng_seed: u64) -> SimState {
    reset_with_socket(cfg, cfg.socket_pose_true, rng_seed)
}

/// Like [`reset`], but the goal estimate is built around `estimate_socket`
/// instead of the true socket (the socket may have moved since the estimate).
pub fn reset_with_socket(cfg: &DomainConfig, estimate_socket: Pose2, rng_seed: u64) -> SimState {
    let mut rng = seed::stream(rng_seed, "reset", 0);
    let goal_true = cfg.goal_for_socket(cfg.socket_pose_true);
    let goal_est = cfg.goal_for_socket(estimate_socket);
    let mut uniform = |half: f64| if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
    let nx = uniform(cfg.goal_noise_xy);
    let ny = uniform(cfg.goal_noise_xy);
    let nt = uniform(cfg.goal_noise_yaw);
    let goal_noisy = Pose2::new(goal_est.x + nx, goal_est.y + ny, goal_est.theta + nt);
    let ee = goal_noisy.along_axis(cfg.approach_height);
    SimState {
        ee_pose: ee,
        ee_twist: Twist2::default(),
        target_pose: ee,
        goal_pose_true: goal_true,
        goal_pose_noisy: goal_noisy,
        contact_wrench: Wrench::ZERO,
        step_count: 0,
        noise_rng: seed::stream(rng_seed, "sensor", 0),
    }
}

/// True iff the end-effector is within 3 mm and 5 deg of the true inserted
/// goal.
pub fn check_success(state: &SimState) -> bool {
    let (t, r) = pose_error(state.ee_pose, state.goal_pose_true);
    t <= SUCCESS_TRANS_MM && r <= SUCCESS_ROT_DEG
}

/// Total contact wrench on the peg at the given pose and velocity.
pub fn contact_wrench(cfg: &DomainConfig, ee: &Pose2, twist: &Twist2) -> Wrench {
    contact::contacts(cfg, ee, [twist.vx, twist.vy], twist.omega, &cfg.socket_pose_true)
        .iter()
        .fold(Wrench::ZERO, |s, c| s.add(c.wrench))
}

/// New controller setpoint for an action.
pub fn next_target(state: &SimState, cfg: &DomainConfig, action: ActionDelta) -> Pose2 {
    let base = if cfg.plai_mode { state.target_pose } else { state.ee_pose };
    let mut t = Pose2::new(
        base.x + action.dx * cfg.action_scale_trans,
        base.y + action.dy * cfg.action_scale_trans,
        base.theta + action.dtheta * cfg.action_scale_rot,
    );
    let e = state.ee_pose;
    let (dx, dy) = (t.x - e.x, t.y - e.y);
    let d = dx.hypot(dy);
    if d > cfg.target_clip_trans {
        let k = cfg.target_clip_trans / d;
        t.x = e.x + dx * k;
        t.y = e.y + dy * k;
    }
    let dt = wrap_deg(t.theta - e.theta).clamp(-cfg.target_clip_rot, cfg.target_clip_rot);
    t.theta = wrap_deg(e.theta + dt);
    t
}

/// One semi-implicit Euler substep. Returns the contact wrench applied.
pub fn substep(cfg: &DomainConfig, pose: &mut Pose2, twist: &mut Twist2, target: &Pose2) -> Wrench {
    let w = contact_wrench(cfg, pose, twist);
    let dt = cfg.physics_dt;
    let fx = cfg.controller_stiffness * (target.x - pose.x) - cfg.controller_damping * twist.vx + w.fx;
    let fy = cfg.controller_stiffness * (target.y - pose.y) - cfg.controller_damping * twist.vy + w.fy;
    let tau = cfg.rotational_stiffness * wrap_deg(target.theta - pose.theta)
        - cfg.rotational_damping * twist.omega
        + w.tau;
    twist.vx += dt * fx / cfg.virtual_mass;
    twist.vy += dt * fy / cfg.virtual_mass;
    twist.omega += dt * tau / cfg.virtual_inertia;
    pose.x += dt * twist.vx;
    pose.y += dt * twist.vy;
    pose.theta = wrap_deg(pose.theta + dt * twist.omega);
    w
}

/// Applies an (already clamped) action and integrates one control period
/// without rendering.
pub fn advance(state: &SimState, cfg: &DomainConfig, action: ActionDelta) -> Advance {
    let mut s = state.clone();
    s.target_pose = next_target(state, cfg, action);
    let mut pose = s.ee_pose;
    let mut twist = s.ee_twist;
    let mut aborted = false;
    for _ in 0..cfg.substeps() {
        substep(cfg, &mut pose, &mut twist, &s.target_pose);
        let far = (pose.x - state.goal_pose_true.x).abs().max((pose.y - state.goal_pose_true.y).abs());
        if !pose.is_finite() || !twist.vx.is_finite() || far > cfg.workspace_bound {
            aborted = true;
            break;
        }
    }
    s.step_count += 1;
    if aborted {
        // keep the last finite state so observations stay well-defined
        s.ee_twist = Twist2::default();
        s.contact_wrench = Wrench::ZERO;
        return Advance { state: s, success: false, aborted: true, done: true };
    }
    s.ee_pose = pose;
    s.ee_twist = twist;
    // the wrench reported is the one acting at the observation instant
    s.contact_wrench = contact_wrench(cfg, &pose, &twist);
    let success = check_success(&s);
    let done = success || s.step_count >= cfg.horizon;
    Advance { state: s, success, aborted: false, done }
}

/// Residual observation of a state: sensed wrench plus both camera views.
pub fn observe_residual(state: &mut SimState, cfg: &DomainConfig) -> ResidualObs {
    let mut w = state.contact_wrench.to_array();
    if cfg.sensor_noise_ft > 0.0 {
        for (i, v) in w.iter_mut().enumerate() {
            let n: f64 = StandardNormal.sample(&mut state.noise_rng);
            // torque noise scaled by a nominal 15 mm lever arm
            *v += cfg.sensor_noise_ft * n * if i == 2 { 15.0 } else { 1.0 };
        }
    }
    ResidualObs {
        ee_pose: state.ee_pose,
        ee_twist: state.ee_twist,
        contact_wrench: w,
        image_front: render::render(cfg, &state.ee_pose, View::Front),
        image_wrist: render::render(cfg, &state.ee_pose, View::Wrist),
    }
}

/// Full control step: dynamics, observations, sparse reward and termination.
pub fn step(state: &SimState, cfg: &DomainConfig, action: ActionDelta) -> StepResult {
    let Advance { mut state, success, aborted, done } = advance(state, cfg, action);
    let residual_obs = observe_residual(&mut state, cfg);
    StepResult {
        base_obs: BaseObs::from_state(&state),
        residual_obs,
        reward: if success { 1.0 } else { 0.0 },
        done,
        success,
        aborted,
        state,
    }
}

/// Waypoints from `approach_height` above the inserted goal down to the goal,
/// evenly spaced, in assembly order.
pub fn disassembly_path(cfg: &DomainConfig, n_waypoints: usize) -> Vec<Pose2> {
    path_to_goal(cfg.goal_for_socket(cfg.socket_pose_true), cfg.approach_height, n_waypoints)
}

/// Straight extraction path from `goal` to `height` above it, reversed.
pub fn path_to_goal(goal: Pose2, height: f64, n_waypoints: usize) -> Vec<Pose2> {
    assert!(n_waypoints >= 2, "a path needs at least two waypoints");
    let last = (n_waypoints - 1) as f64;
    // extraction runs goal -> above; reversing gives the assembly order
    let mut extraction: Vec<Pose2> =
        (0..n_waypoints).map(|i| goal.along_axis(height * i as f64 / last)).collect();
    extraction.reverse();
    extraction
}

/// Mechanical energy of the end-effector relative to a fixed setpoint:
/// kinetic plus controller spring potential (angles in degrees).
pub fn controller_energy(cfg: &DomainConfig, pose: &Pose2, twist: &Twist2, target: &Pose2) -> f64 {
    let dx = target.x - pose.x;
    let dy = target.y - pose.y;
    let dt = wrap_deg(target.theta - pose.theta);
    0.5 * cfg.virtual_mass * (twist.vx * twist.vx + twist.vy * twist.vy)
        + 0.5 * cfg.virtual_inertia * twist.omega * twist.omega
        + 0.5 * cfg.controller_stiffness * (dx * dx + dy * dy)
        + 0.5 * cfg.rotational_stiffness * dt * dt
}
