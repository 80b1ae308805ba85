use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Pose2;
use crate::kv::{KvDoc, KvWriter};

/// Contact footprint of the peg.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PegShape {
    /// Footprint ignores the peg heading: contact is computed as if the peg
    /// were aligned with the socket, so heading errors never jam.
    Round,
    /// Footprint rotates with the peg; heading errors jam in tight slots.
    Rectangular,
}

impl fmt::Display for PegShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PegShape::Round => "round",
            PegShape::Rectangular => "rectangular",
        })
    }
}

impl FromStr for PegShape {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "round" => Ok(PegShape::Round),
            "rectangular" => Ok(PegShape::Rectangular),
            other => Err(format!("unknown peg shape `{other}` (round|rectangular)")),
        }
    }
}

/// Full parameterization of one environment instance.
///
/// `socket_pose_true` is the pose of the slot floor centre with +y pointing
/// out of the slot. The end-effector holds the peg at its top edge, so the
/// inserted end-effector pose sits `insertion_offset` above the floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    pub peg_width: f64,
    pub peg_height: f64,
    pub peg_shape: PegShape,
    pub socket_clearance: f64,
    pub socket_depth: f64,
    pub socket_wall: f64,
    pub controller_stiffness: f64,
    pub controller_damping: f64,
    pub rotational_stiffness: f64,
    pub rotational_damping: f64,
    pub virtual_mass: f64,
    pub virtual_inertia: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub contact_friction: f64,
    pub friction_damping: f64,
    pub goal_noise_xy: f64,
    pub goal_noise_yaw: f64,
    pub sensor_noise_ft: f64,
    pub socket_pose_true: Pose2,
    pub render_seed: u64,
    pub action_scale_trans: f64,
    pub action_scale_rot: f64,
    pub plai_mode: bool,
    pub physics_dt: f64,
    pub control_dt: f64,
    pub insertion_offset: f64,
    pub approach_height: f64,
    pub horizon: usize,
    pub target_clip_trans: f64,
    pub target_clip_rot: f64,
    pub workspace_bound: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self::nominal()
    }
}

impl DomainConfig {
    /// The simulation domain the base policy is pretrained in.
    pub fn nominal() -> Self {
        DomainConfig {
            peg_width: 10.0,
            peg_height: 15.0,
            peg_shape: PegShape::Round,
            socket_clearance: 1.0,
            socket_depth: 10.0,
            socket_wall: 15.0,
            controller_stiffness: 100.0,
            controller_damping: 20.0,
            rotational_stiffness: 5000.0,
            rotational_damping: 1000.0,
            virtual_mass: 1.0,
            virtual_inertia: 50.0,
            contact_stiffness: 5000.0,
            contact_damping: 40.0,
            contact_friction: 0.3,
            friction_damping: 200.0,
            goal_noise_xy: 0.0,
            goal_noise_yaw: 0.0,
            sensor_noise_ft: 0.0,
            socket_pose_true: Pose2::IDENTITY,
            render_seed: 1,
            action_scale_trans: 2.0,
            action_scale_rot: 2.0,
            plai_mode: false,
            physics_dt: 1.0 / 600.0,
            control_dt: 1.0 / 15.0,
            insertion_offset: 15.0,
            approach_height: 20.0,
            horizon: 150,
            target_clip_trans: 4.0,
            target_clip_rot: 4.0,
            workspace_bound: 200.0,
        }
    }

    /// The perturbed deployment domain: softer controller, more friction,
    /// tighter slot, noisy goal estimate, noisy force sensing, different
    /// appearance and integrating action semantics.
    pub fn real() -> Self {
        DomainConfig {
            controller_stiffness: 70.0,
            contact_friction: 0.6,
            socket_clearance: 0.6,
            goal_noise_xy: 1.5,
            sensor_noise_ft: 2.0,
            render_seed: 2,
            plai_mode: true,
            ..Self::nominal()
        }
    }

    /// Unseen-task variant of the deployment domain: heading-sensitive
    /// footprint, tighter clearance and heading noise on the start pose.
    pub fn transfer() -> Self {
        DomainConfig {
            peg_shape: PegShape::Rectangular,
            socket_clearance: 0.25,
            goal_noise_xy: 0.0,
            goal_noise_yaw: 3.0,
            render_seed: 3,
            ..Self::real()
        }
    }

    /// Number of physics substeps per control step.
    pub fn substeps(&self) -> usize {
        (self.control_dt / self.physics_dt).round() as usize
    }

    /// End-effector pose at full insertion for a socket pose.
    pub fn goal_for_socket(&self, socket: Pose2) -> Pose2 {
        socket.along_axis(self.insertion_offset)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        let positive = [
            ("peg_width", self.peg_width),
            ("peg_height", self.peg_height),
            ("socket_clearance", self.socket_clearance),
            ("socket_depth", self.socket_depth),
            ("socket_wall", self.socket_wall),
            ("virtual_mass", self.virtual_mass),
            ("virtual_inertia", self.virtual_inertia),
            ("action_scale_trans", self.action_scale_trans),
            ("action_scale_rot", self.action_scale_rot),
            ("physics_dt", self.physics_dt),
            ("control_dt", self.control_dt),
            ("target_clip_trans", self.target_clip_trans),
            ("target_clip_rot", self.target_clip_rot),
            ("workspace_bound", self.workspace_bound),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be finite and > 0 (got {v})"));
            }
        }
        let non_negative = [
            ("controller_stiffness", self.controller_stiffness),
            ("controller_damping", self.controller_damping),
            ("rotational_stiffness", self.rotational_stiffness),
            ("rotational_damping", self.rotational_damping),
            ("contact_stiffness", self.contact_stiffness),
            ("contact_damping", self.contact_damping),
            ("contact_friction", self.contact_friction),
            ("friction_damping", self.friction_damping),
            ("goal_noise_xy", self.goal_noise_xy),
            ("goal_noise_yaw", self.goal_noise_yaw),
            ("sensor_noise_ft", self.sensor_noise_ft),
            ("insertion_offset", self.insertion_offset),
            ("approach_height", self.approach_height),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(&format!("{name} must be finite and >= 0 (got {v})"));
            }
        }
        let ratio = self.control_dt / self.physics_dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return bad("control_dt must be an integer multiple of physics_dt");
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1");
        }
        if !self.socket_pose_true.is_finite() {
            return bad("socket_pose_true must be finite");
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut w = KvWriter::default();
        w.comment("domain configuration (mm, deg, s)")
            .put("peg_width", self.peg_width)
            .put("peg_height", self.peg_height)
            .put("peg_shape", self.peg_shape)
            .put("socket_clearance", self.socket_clearance)
            .put("socket_depth", self.socket_depth)
            .put("socket_wall", self.socket_wall)
            .put("controller_stiffness", self.controller_stiffness)
            .put("controller_damping", self.controller_damping)
            .put("rotational_stiffness", self.rotational_stiffness)
            .put("rotational_damping", self.rotational_damping)
            .put("virtual_mass", self.virtual_mass)
            .put("virtual_inertia", self.virtual_inertia)
            .put("contact_stiffness", self.contact_stiffness)
            .put("contact_damping", self.contact_damping)
            .put("contact_friction", self.contact_friction)
            .put("friction_damping", self.friction_damping)
            .put("goal_noise_xy", self.goal_noise_xy)
            .put("goal_noise_yaw", self.goal_noise_yaw)
            .put("sensor_noise_ft", self.sensor_noise_ft)
            .put("socket_x", self.socket_pose_true.x)
            .put("socket_y", self.socket_pose_true.y)
            .put("socket_theta", self.socket_pose_true.theta)
            .put("render_seed", self.render_seed)
            .put("action_scale_trans", self.action_scale_trans)
            .put("action_scale_rot", self.action_scale_rot)
            .put("plai_mode", self.plai_mode)
            .put("physics_dt", self.physics_dt)
            .put("control_dt", self.control_dt)
            .put("insertion_offset", self.insertion_offset)
            .put("approach_height", self.approach_height)
            .put("horizon", self.horizon)
            .put("target_clip_trans", self.target_clip_trans)
            .put("target_clip_rot", self.target_clip_rot)
            .put("workspace_bound", self.workspace_bound);
        w.finish()
    }

    const KEYS: &'static [&'static str] = &[
        "base", "peg_width", "peg_height", "peg_shape", "socket_clearance", "socket_depth",
        "socket_wall", "controller_stiffness", "controller_damping", "rotational_stiffness",
        "rotational_damping", "virtual_mass", "virtual_inertia", "contact_stiffness",
        "contact_damping", "contact_friction", "friction_damping", "goal_noise_xy",
        "goal_noise_yaw", "sensor_noise_ft", "socket_x", "socket_y", "socket_theta",
        "render_seed", "action_scale_trans", "action_scale_rot", "plai_mode", "physics_dt",
        "control_dt", "insertion_offset", "approach_height", "horizon", "target_clip_trans",
        "target_clip_rot", "workspace_bound",
    ];

    /// Reads a config; missing keys fall back to the preset named by the
    /// optional `base` key (`nominal`, `real` or `transfer`, default nominal).
    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        doc.reject_unknown(Self::KEYS)?;
        let mut c = match doc.get::<String>("base")?.as_deref() {
            None | Some("nominal") => Self::nominal(),
            Some("real") => Self::real(),
            Some("transfer") => Self::transfer(),
            Some(other) => {
                return Err(Error::InvalidConfig(format!("unknown base preset `{other}`")));
            }
        };
        doc.set("peg_width", &mut c.peg_width)?;
        doc.set("peg_height", &mut c.peg_height)?;
        doc.set("peg_shape", &mut c.peg_shape)?;
        doc.set("socket_clearance", &mut c.socket_clearance)?;
        doc.set("socket_depth", &mut c.socket_depth)?;
        doc.set("socket_wall", &mut c.socket_wall)?;
        doc.set("controller_stiffness", &mut c.controller_stiffness)?;
        doc.set("controller_damping", &mut c.controller_damping)?;
        doc.set("rotational_stiffness", &mut c.rotational_stiffness)?;
        doc.set("rotational_damping", &mut c.rotational_damping)?;
        doc.set("virtual_mass", &mut c.virtual_mass)?;
        doc.set("virtual_inertia", &mut c.virtual_inertia)?;
        doc.set("contact_stiffness", &mut c.contact_stiffness)?;
        doc.set("contact_damping", &mut c.contact_damping)?;
        doc.set("contact_friction", &mut c.contact_friction)?;
        doc.set("friction_damping", &mut c.friction_damping)?;
        doc.set("goal_noise_xy", &mut c.goal_noise_xy)?;
        doc.set("goal_noise_yaw", &mut c.goal_noise_yaw)?;
        doc.set("sensor_noise_ft", &mut c.sensor_noise_ft)?;
        doc.set("socket_x", &mut c.socket_pose_true.x)?;
        doc.set("socket_y", &mut c.socket_pose_true.y)?;
        doc.set("socket_theta", &mut c.socket_pose_true.theta)?;
        doc.set("render_seed", &mut c.render_seed)?;
        doc.set("action_scale_trans", &mut c.action_scale_trans)?;
        doc.set("action_scale_rot", &mut c.action_scale_rot)?;
        doc.set("plai_mode", &mut c.plai_mode)?;
        doc.set("physics_dt", &mut c.physics_dt)?;
        doc.set("control_dt", &mut c.control_dt)?;
        doc.set("insertion_offset", &mut c.insertion_offset)?;
        doc.set("approach_height", &mut c.approach_height)?;
        doc.set("horizon", &mut c.horizon)?;
        doc.set("target_clip_trans", &mut c.target_clip_trans)?;
        doc.set("target_clip_rot", &mut c.target_clip_rot)?;
        doc.set("workspace_bound", &mut c.workspace_bound)?;
        c.socket_pose_true = Pose2::new(c.socket_pose_true.x, c.socket_pose_true.y, c.socket_pose_true.theta);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvDoc::load(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for c in [DomainConfig::nominal(), DomainConfig::real(), DomainConfig::transfer()] {
            c.validate().unwrap();
        }
        assert_eq!(DomainConfig::nominal().substeps(), 40);
    }

    #[test]
    fn kv_roundtrip_is_exact() {
        let mut c = DomainConfig::transfer();
        c.socket_pose_true = Pose2::new(1.0 / 3.0, -20.0, 2.5);
        let doc = KvDoc::parse(&c.to_kv(), "mem").unwrap();
        assert_eq!(DomainConfig::from_kv(&doc).unwrap(), c);
    }

    #[test]
    fn base_preset_and_overrides() {
        let doc = KvDoc::parse("base = real\nsocket_clearance = 0.4\n", "mem").unwrap();
        let c = DomainConfig::from_kv(&doc).unwrap();
        assert!(c.plai_mode);
        assert_eq!(c.socket_clearance, 0.4);
    }

    #[test]
    fn rejects_invalid() {
        let doc = KvDoc::parse("socket_clearance = 0\n", "mem").unwrap();
        assert!(DomainConfig::from_kv(&doc).is_err());
        let doc = KvDoc::parse("physics_dt = 0.03\n", "mem").unwrap();
        assert!(DomainConfig::from_kv(&doc).is_err());
        let doc = KvDoc::parse("peg_colour = red\n", "mem").unwrap();
        assert!(DomainConfig::from_kv(&doc).is_err());
    }
}
