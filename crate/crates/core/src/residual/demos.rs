//! Demonstration harvesting from base-policy rollouts, and the on-disk
//! trajectory format.
//!
//! Each rollout executes `mu + sigma * eps` from the base policy, but records
//! it split into a base label `mu` and a residual label `sigma * eps`, so the
//! residual learner sees demonstrations in its own action space.

use std::fs;
use std::path::{Path, PathBuf};

use image::GrayImage;
use sha2::{Digest, Sha256};

use crate::base::BasePolicy;
use crate::error::{Error, Result};
use crate::geom::{Pose2, Twist2};
use crate::nn::gaussian::sample;
use crate::residual::replay::Transition;
use crate::residual::{combine, Observer};
use crate::seed;
use crate::sim::{self, render::IMAGE_SIZE, BaseObs, DomainConfig, ResidualObs};

/// What the residual saw at one instant, with the base label for it.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoFrame {
    pub obs: ResidualObs,
    /// The goal estimate in force; only the state-based residual reads it.
    pub goal_noisy: Pose2,
    pub base_action: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemoStep {
    pub residual_action: [f64; 3],
    pub reward: f64,
    pub done: bool,
}

/// One recorded rollout: `steps.len() + 1` frames, the last one being the
/// observation after the final step.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoTrajectory {
    pub frames: Vec<DemoFrame>,
    pub steps: Vec<DemoStep>,
}

impl DemoTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn succeeded(&self) -> bool {
        self.steps.last().is_some_and(|s| s.reward > 0.0)
    }

    /// Transitions with observations encoded by `observer`.
    pub fn transitions(&self, observer: &Observer) -> Vec<Transition> {
        let enc: Vec<Vec<f64>> = self.frames.iter().map(|f| observer.encode(&f.obs, &f.goal_noisy)).collect();
        self.steps
            .iter()
            .enumerate()
            .map(|(t, s)| Transition {
                obs: enc[t].clone(),
                base_action: self.frames[t].base_action,
                residual_action: s.residual_action,
                reward: s.reward,
                done: s.done,
                next_obs: enc[t + 1].clone(),
                next_base_action: self.frames[t + 1].base_action,
            })
            .collect()
    }

    /// The same executed actions attributed entirely to the residual, for
    /// learning without a base policy.
    pub fn relabel_without_base(&self) -> DemoTrajectory {
        let mut out = self.clone();
        for (t, s) in out.steps.iter_mut().enumerate() {
            let b = self.frames[t].base_action;
            s.residual_action = [b[0] + s.residual_action[0], b[1] + s.residual_action[1], b[2] + s.residual_action[2]];
        }
        for f in &mut out.frames {
            f.base_action = [0.0; 3];
        }
        out
    }
}

/// Abort rule for demo collection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FloorConfig {
    pub min_success: f64,
    pub window: usize,
}

impl Default for FloorConfig {
    fn default() -> Self {
        FloorConfig { min_success: 0.05, window: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct DemoCollection {
    pub trajectories: Vec<DemoTrajectory>,
    pub attempts: usize,
}

/// Rolls out the base policy with Gaussian residual labels and records one
/// trajectory. Residual labels are drawn from `N(0, sigma_t)`, where
/// `sigma_t` is the base policy's own standard deviation.
pub fn rollout_demo(base: &BasePolicy, domain: &DomainConfig, episode_seed: u64) -> Result<DemoTrajectory> {
    let mut rng = seed::stream(episode_seed, "demo-noise", 0);
    let mut state = sim::reset(domain, episode_seed);
    let frame = |state: &mut sim::SimState| -> Result<DemoFrame> {
        let obs = sim::observe_residual(state, domain);
        let (mu, _) = base.policy.forward(&BaseObs::from_state(state).to_vec())?;
        Ok(DemoFrame { obs, goal_noisy: state.goal_pose_noisy, base_action: [mu[0], mu[1], mu[2]] })
    };
    let mut frames = vec![frame(&mut state)?];
    let mut steps = Vec::new();
    loop {
        let (_, sigma) = base.policy.forward(&BaseObs::from_state(&state).to_vec())?;
        let (a_r, _) = sample(&[0.0; 3], &sigma, &mut rng);
        let a_r = [a_r[0], a_r[1], a_r[2]];
        let a_b = frames.last().unwrap().base_action;
        let adv = sim::advance(&state, domain, combine(a_b, a_r)?);
        state = adv.state;
        let terminal = adv.success || adv.aborted;
        steps.push(DemoStep { residual_action: a_r, reward: if adv.success { 1.0 } else { 0.0 }, done: terminal });
        frames.push(frame(&mut state)?);
        if adv.done {
            return Ok(DemoTrajectory { frames, steps });
        }
    }
}

/// Collects `n_target` successful trajectories. Fails with
/// [`Error::SuccessFloor`] once the success rate over the last
/// `floor.window` attempts drops below `floor.min_success`.
pub fn collect_demos(
    base: &BasePolicy,
    domain: &DomainConfig,
    n_target: usize,
    seed_value: u64,
    floor: FloorConfig,
) -> Result<DemoCollection> {
    domain.validate()?;
    let mut trajectories = Vec::with_capacity(n_target);
    let mut recent: Vec<bool> = Vec::new();
    let mut attempts = 0usize;
    while trajectories.len() < n_target {
        let traj = rollout_demo(base, domain, seed::derive(seed_value, "demo-episode", attempts as u64))?;
        attempts += 1;
        let ok = traj.succeeded();
        recent.push(ok);
        if ok {
            trajectories.push(traj);
        }
        if recent.len() >= floor.window {
            let window = &recent[recent.len() - floor.window..];
            let rate = window.iter().filter(|s| **s).count() as f64 / floor.window as f64;
            if rate < floor.min_success && trajectories.len() < n_target {
                return Err(Error::SuccessFloor { rate, window: floor.window, floor: floor.min_success });
            }
        }
    }
    Ok(DemoCollection { trajectories, attempts })
}

const MAGIC: &[u8; 8] = b"RSDLDEMO";
const VERSION: u32 = 1;

fn put_f64s(buf: &mut Vec<u8>, vals: &[f64]) {
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::format("demo file", "truncated"));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s<const N: usize>(&mut self) -> Result<[f64; N]> {
        let mut out = [0.0; N];
        for v in &mut out {
            *v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        }
        Ok(out)
    }
}

impl DemoTrajectory {
    /// Header (magic, version, image side, step count), packed frames and
    /// steps, then a SHA-256 of everything before it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let side = IMAGE_SIZE;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&side.to_le_bytes());
        buf.extend_from_slice(&(self.steps.len() as u32).to_le_bytes());
        for f in &self.frames {
            let (p, t, g) = (f.obs.ee_pose, f.obs.ee_twist, f.goal_noisy);
            put_f64s(&mut buf, &[p.x, p.y, p.theta, t.vx, t.vy, t.omega]);
            put_f64s(&mut buf, &f.obs.contact_wrench);
            put_f64s(&mut buf, &[g.x, g.y, g.theta]);
            put_f64s(&mut buf, &f.base_action);
            buf.extend_from_slice(f.obs.image_front.as_raw());
            buf.extend_from_slice(f.obs.image_wrist.as_raw());
        }
        for s in &self.steps {
            put_f64s(&mut buf, &s.residual_action);
            put_f64s(&mut buf, &[s.reward]);
            buf.push(s.done as u8);
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 12 + 32 {
            return Err(Error::format("demo file", "too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::format("demo file", "checksum mismatch"));
        }
        let mut r = Reader { bytes: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::format("demo file", "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format("demo file", format!("unsupported version {version}")));
        }
        let side = r.u32()?;
        let n = r.u32()? as usize;
        let px = (side * side) as usize;
        let mut frames = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            let [x, y, th, vx, vy, om] = r.f64s::<6>()?;
            let wrench = r.f64s::<3>()?;
            let [gx, gy, gt] = r.f64s::<3>()?;
            let base_action = r.f64s::<3>()?;
            let img = |b: &[u8]| GrayImage::from_raw(side, side, b.to_vec()).expect("size checked by take");
            let image_front = img(r.take(px)?);
            let image_wrist = img(r.take(px)?);
            frames.push(DemoFrame {
                obs: ResidualObs {
                    ee_pose: Pose2::new(x, y, th),
                    ee_twist: Twist2 { vx, vy, omega: om },
                    contact_wrench: wrench,
                    image_front,
                    image_wrist,
                },
                goal_noisy: Pose2::new(gx, gy, gt),
                base_action,
            });
        }
        let mut steps = Vec::with_capacity(n);
        for _ in 0..n {
            let residual_action = r.f64s::<3>()?;
            let [reward] = r.f64s::<1>()?;
            let done = match r.take(1)?[0] {
                0 => false,
                1 => true,
                b => return Err(Error::format("demo file", format!("bad done flag {b}"))),
            };
            steps.push(DemoStep { residual_action, reward, done });
        }
        if r.pos != body.len() {
            return Err(Error::format("demo file", "trailing bytes"));
        }
        Ok(DemoTrajectory { frames, steps })
    }
}

/// Writes `demo_000.bin`, `demo_001.bin`, ... into `dir`.
pub fn save_demos(trajectories: &[DemoTrajectory], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(trajectories.len());
    for (i, t) in trajectories.iter().enumerate() {
        let p = dir.join(format!("demo_{i:03}.bin"));
        fs::write(&p, t.to_bytes())?;
        paths.push(p);
    }
    Ok(paths)
}

/// Loads every `demo_*.bin` in `dir`, in file-name order.
pub fn load_demos(dir: &Path) -> Result<Vec<DemoTrajectory>> {
    if !dir.is_dir() {
        return Err(Error::MissingArtifact(dir.to_path_buf()));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("demo_") && n.ends_with(".bin"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::MissingArtifact(dir.join("demo_000.bin")));
    }
    paths.iter().map(|p| DemoTrajectory::from_bytes(&fs::read(p)?)).collect()
}
