//! Dense reward for following the reversed extraction path.

use crate::geom::Pose2;

/// Radius within which a waypoint counts as passed, mm.
pub const PASS_RADIUS_MM: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ImitationRewardConfig {
    pub n_waypoints: usize,
    /// Penalty per mm of distance to the next unpassed waypoint.
    pub w_distance: f64,
    /// Bonus per index of the furthest passed waypoint.
    pub w_progress: f64,
    /// Bonus while the success predicate holds.
    pub w_success: f64,
    /// Millimetres of distance charged per degree of heading error.
    pub yaw_mm_per_deg: f64,
}

impl Default for ImitationRewardConfig {
    fn default() -> Self {
        ImitationRewardConfig { n_waypoints: 5, w_distance: 0.1, w_progress: 0.5, w_success: 10.0, yaw_mm_per_deg: 1.0 }
    }
}

impl ImitationRewardConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.n_waypoints < 2 {
            return Err(crate::Error::InvalidConfig("n_waypoints must be at least 2".into()));
        }
        if [self.w_distance, self.w_progress, self.w_success, self.yaw_mm_per_deg].iter().any(|w| !(*w >= 0.0)) {
            return Err(crate::Error::InvalidConfig("reward weights must be non-negative".into()));
        }
        Ok(())
    }
}

fn dist(a: &Pose2, b: &Pose2) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Translation distance combined with weighted heading error.
pub fn pose_distance(a: &Pose2, b: &Pose2, yaw_mm_per_deg: f64) -> f64 {
    let (t, r) = crate::geom::pose_error(*a, *b);
    t.hypot(r * yaw_mm_per_deg)
}

/// Furthest waypoint index reached so far, carried across an episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Progress {
    pub furthest: Option<usize>,
}

impl Progress {
    /// Marks every waypoint within the pass radius of `ee` as reached.
    pub fn update(&mut self, ee: &Pose2, path: &[Pose2]) {
        for (i, w) in path.iter().enumerate() {
            if dist(ee, w) <= PASS_RADIUS_MM && self.furthest.is_none_or(|f| i > f) {
                self.furthest = Some(i);
            }
        }
    }

    /// First waypoint beyond the furthest reached one.
    pub fn next_unpassed(&self) -> usize {
        self.furthest.map_or(0, |f| f + 1)
    }
}

/// Reward after the end-effector moved to `ee`. Updates `progress` first, so
/// a waypoint reached on this step already counts.
///
/// `r = -w_d * dist(ee, next unpassed) + w_p * furthest index + w_s * success`,
/// with the distance term zero once every waypoint is passed. Waypoints are
/// passed on translation alone; the distance also charges heading error.
pub fn imitation_reward(
    ee: &Pose2,
    path: &[Pose2],
    progress: &mut Progress,
    success: bool,
    cfg: &ImitationRewardConfig,
) -> f64 {
    assert!(!path.is_empty(), "reward path is empty");
    progress.update(ee, path);
    let next = progress.next_unpassed();
    let d = path.get(next).map_or(0.0, |w| pose_distance(ee, w, cfg.yaw_mm_per_deg));
    let idx = progress.furthest.map_or(0, |f| f) as f64;
    -cfg.w_distance * d + cfg.w_progress * idx + if success { cfg.w_success } else { 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::path_to_goal;

    fn path() -> Vec<Pose2> {
        path_to_goal(Pose2::new(0.0, 15.0, 0.0), 20.0, 5)
    }

    #[test]
    fn final_waypoint_with_success() {
        let cfg = ImitationRewardConfig::default();
        let p = path();
        let mut prog = Progress::default();
        let r = imitation_reward(&p[4], &p, &mut prog, true, &cfg);
        assert_eq!(r, cfg.w_progress * 4.0 + cfg.w_success);
    }

    #[test]
    fn first_waypoint_counts_as_passed() {
        let cfg = ImitationRewardConfig::default();
        let p = path();
        let mut prog = Progress::default();
        let r = imitation_reward(&p[0], &p, &mut prog, false, &cfg);
        assert_eq!(prog.furthest, Some(0));
        // index 0 contributes nothing; distance to the next waypoint is 5 mm
        assert!((r - (-cfg.w_distance * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn before_any_waypoint_distance_is_to_the_first() {
        let cfg = ImitationRewardConfig::default();
        let p = path();
        let mut prog = Progress::default();
        let ee = Pose2::new(0.0, p[0].y + 10.0, 0.0);
        let r = imitation_reward(&ee, &p, &mut prog, false, &cfg);
        assert_eq!(prog.furthest, None);
        assert!((r + cfg.w_distance * 10.0).abs() < 1e-12);
    }

    #[test]
    fn heading_error_adds_to_distance() {
        let cfg = ImitationRewardConfig::default();
        let p = path();
        let mut prog = Progress::default();
        // at waypoint 0 but rotated 5 deg: 5 mm to waypoint 1 and 5 deg off it
        let ee = Pose2::new(p[0].x, p[0].y, 5.0);
        let r = imitation_reward(&ee, &p, &mut prog, false, &cfg);
        assert_eq!(prog.furthest, Some(0));
        assert!((r + cfg.w_distance * 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn progress_term_is_monotone_along_the_path() {
        let cfg = ImitationRewardConfig { w_distance: 0.0, w_success: 0.0, ..Default::default() };
        let p = path();
        let mut prog = Progress::default();
        let mut prev = f64::NEG_INFINITY;
        let (y0, y1) = (p[0].y, p[4].y);
        for k in 0..=200 {
            let y = y0 + (y1 - y0) * k as f64 / 200.0;
            let r = imitation_reward(&Pose2::new(0.0, y, 0.0), &p, &mut prog, false, &cfg);
            assert!(r >= prev);
            prev = r;
        }
        assert_eq!(prog.furthest, Some(4));
        // moving back up keeps the furthest index
        let r = imitation_reward(&p[0], &p, &mut prog, false, &cfg);
        assert_eq!(r, prev);
    }
}
