//! Planar rigid-body math.
//!
//! Lengths are millimetres and angles are degrees everywhere in the crate;
//! every success threshold is stated in those units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn wrap_deg(a: f64) -> f64 {
    let mut w = a % 360.0;
    if w <= -180.0 {
        w += 360.0;
    } else if w > 180.0 {
        w -= 360.0;
    }
    w
}

/// Planar pose: position in mm, heading in degrees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 { x: 0.0, y: 0.0, theta: 0.0 };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 { x, y, theta: wrap_deg(theta) }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    /// Maps a point given in this pose's frame into the world frame.
    pub fn transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.to_radians().sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    /// Maps a world point into this pose's frame.
    pub fn inverse_transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.to_radians().sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// Rotates a direction vector from this pose's frame into the world frame.
    pub fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.to_radians().sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    /// Offsets the pose by `dist` along its own local +y axis.
    pub fn along_axis(&self, dist: f64) -> Pose2 {
        let [x, y] = self.transform_point([0.0, dist]);
        Pose2 { x, y, theta: self.theta }
    }
}

/// Componentwise addition of two poses with the heading wrapped.
pub fn compose(p: Pose2, d: Pose2) -> Pose2 {
    Pose2::new(p.x + d.x, p.y + d.y, p.theta + d.theta)
}

/// Euclidean translation error (mm) and absolute wrapped heading error (deg).
pub fn pose_error(p: Pose2, goal: Pose2) -> (f64, f64) {
    let dx = p.x - goal.x;
    let dy = p.y - goal.y;
    (dx.hypot(dy), wrap_deg(p.theta - goal.theta).abs())
}

/// Planar velocity: mm/s and deg/s.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist2 {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist2 {
    pub fn to_array(self) -> [f64; 3] {
        [self.vx, self.vy, self.omega]
    }
}

/// Incremental pose-target command, each component in `[-1, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionDelta {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl ActionDelta {
    pub const ZERO: ActionDelta = ActionDelta { dx: 0.0, dy: 0.0, dtheta: 0.0 };

    pub fn to_array(self) -> [f64; 3] {
        [self.dx, self.dy, self.dtheta]
    }
}

/// Clamps a raw 3-vector into an [`ActionDelta`].
///
/// A non-finite component means the network producing it diverged, so it is
/// reported instead of silently clamped.
pub fn clamp_action(a: [f64; 3]) -> Result<ActionDelta> {
    if let Some(i) = a.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteAction { index: i, value: a[i] });
    }
    Ok(ActionDelta {
        dx: a[0].clamp(-1.0, 1.0),
        dy: a[1].clamp(-1.0, 1.0),
        dtheta: a[2].clamp(-1.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Pose2, b: Pose2) -> bool {
        (a.x - b.x).abs() < 1e-9
            && (a.y - b.y).abs() < 1e-9
            && wrap_deg(a.theta - b.theta).abs() < 1e-9
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose(Pose2::IDENTITY, Pose2::new(1.0, 2.0, 3.0)), Pose2::new(1.0, 2.0, 3.0));
        let wrapped = compose(Pose2::new(0.0, 0.0, 179.0), Pose2::new(0.0, 0.0, 2.0));
        assert!((wrapped.theta - -179.0).abs() < 1e-12);
        assert_eq!(
            compose(Pose2::new(5.0, -5.0, 90.0), Pose2::new(-5.0, 5.0, -90.0)),
            Pose2::IDENTITY
        );
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_deg(180.0), 180.0);
        assert_eq!(wrap_deg(-180.0), 180.0);
        assert_eq!(wrap_deg(540.0), 180.0);
        assert!((wrap_deg(-190.0) - 170.0).abs() < 1e-12);
    }

    #[test]
    fn pose_error_examples() {
        let g = Pose2::new(3.0, -1.0, 10.0);
        assert_eq!(pose_error(g, g), (0.0, 0.0));

        let p = Pose2::new(5.0, 1.0, 14.0);
        let (t, r) = pose_error(p, g);
        assert!((t - (8.0f64).sqrt()).abs() < 1e-12);
        assert!((r - 4.0).abs() < 1e-12);

        // brute force: smallest |diff + 360k|
        let diff = 179.0 - (-179.0);
        let oracle = (-2..=2)
            .map(|k| (diff + 360.0 * k as f64).abs())
            .fold(f64::INFINITY, f64::min);
        let (_, r) = pose_error(Pose2::new(0.0, 0.0, 179.0), Pose2::new(0.0, 0.0, -179.0));
        assert!((r - oracle).abs() < 1e-12);
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn clamp_examples() {
        let a = clamp_action([0.3, -0.2, 0.0]).unwrap();
        assert_eq!(a.to_array(), [0.3, -0.2, 0.0]);
        let a = clamp_action([1.3, -2.0, 0.5]).unwrap();
        assert_eq!(a.to_array(), [1.0, -1.0, 0.5]);
        assert!(clamp_action([f64::NAN, 0.0, 0.0]).is_err());
        assert!(clamp_action([0.0, f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn transform_roundtrip() {
        let p = Pose2::new(3.0, -4.0, 30.0);
        let q = p.transform_point([1.5, 2.5]);
        let back = p.inverse_transform_point(q);
        assert!((back[0] - 1.5).abs() < 1e-12 && (back[1] - 2.5).abs() < 1e-12);
        let up = Pose2::new(0.0, 0.0, 90.0).along_axis(2.0);
        assert!((up.x + 2.0).abs() < 1e-12 && up.y.abs() < 1e-12);
    }

    fn pose() -> impl Strategy<Value = Pose2> {
        (-500.0..500.0f64, -500.0..500.0f64, -180.0..180.0f64).prop_map(|(x, y, t)| Pose2::new(x, y, t))
    }

    proptest! {
        #[test]
        fn compose_associative_with_identity(a in pose(), b in pose(), c in pose()) {
            prop_assert!(close(compose(compose(a, b), c), compose(a, compose(b, c))));
            prop_assert!(close(compose(a, Pose2::IDENTITY), a));
            prop_assert!(close(compose(Pose2::IDENTITY, a), a));
        }

        #[test]
        fn pose_error_symmetric(a in pose(), b in pose()) {
            let (t1, r1) = pose_error(a, b);
            let (t2, r2) = pose_error(b, a);
            prop_assert!((t1 - t2).abs() < 1e-9);
            prop_assert!((r1 - r2).abs() < 1e-9 || (r1 - 180.0).abs() < 1e-9);
        }

        #[test]
        fn clamp_idempotent(a in prop::array::uniform3(-5.0..5.0f64)) {
            let once = clamp_action(a).unwrap();
            prop_assert_eq!(clamp_action(once.to_array()).unwrap(), once);
        }
    }
}
