//! Penalty contact between the peg and the socket blocks.
//!
//! Both bodies are convex quads. Penetration depth and normal come from the
//! separating-axis test; the force acts at the centroid of the overlap
//! polygon.

use crate::geom::Pose2;
use crate::sim::config::{DomainConfig, PegShape};

pub type Quad = [[f64; 2]; 4];

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]` placed by `pose`, CCW.
pub fn rect(pose: &Pose2, x0: f64, x1: f64, y0: f64, y1: f64) -> Quad {
    [
        pose.transform_point([x0, y0]),
        pose.transform_point([x1, y0]),
        pose.transform_point([x1, y1]),
        pose.transform_point([x0, y1]),
    ]
}

/// Peg outline in world coordinates. The end-effector grips the top edge
/// centre; the peg hangs `peg_height` below it along the local -y axis.
pub fn peg_quad(cfg: &DomainConfig, ee: &Pose2) -> Quad {
    let hw = cfg.peg_width / 2.0;
    rect(ee, -hw, hw, -cfg.peg_height, 0.0)
}

/// Peg outline used for contact. The round footprint ignores the peg
/// heading and is always aligned with the socket.
pub fn peg_contact_quad(cfg: &DomainConfig, ee: &Pose2, socket: &Pose2) -> Quad {
    match cfg.peg_shape {
        PegShape::Rectangular => peg_quad(cfg, ee),
        PegShape::Round => peg_quad(cfg, &Pose2 { theta: socket.theta, ..*ee }),
    }
}

/// Floor, left wall and right wall of the socket in world coordinates.
pub fn socket_blocks(cfg: &DomainConfig, socket: &Pose2) -> [Quad; 3] {
    let inner = cfg.peg_width / 2.0 + cfg.socket_clearance;
    let outer = inner + cfg.socket_wall;
    [
        rect(socket, -outer, outer, -10.0, 0.0),
        rect(socket, -outer, -inner, 0.0, cfg.socket_depth),
        rect(socket, inner, outer, 0.0, cfg.socket_depth),
    ]
}

fn bounds(q: &Quad) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for p in q {
        b[0] = b[0].min(p[0]);
        b[1] = b[1].max(p[0]);
        b[2] = b[2].min(p[1]);
        b[3] = b[3].max(p[1]);
    }
    b
}

/// Penetration depth and unit normal pushing `a` out of `b`, if they overlap.
pub fn penetration(a: &Quad, b: &Quad) -> Option<(f64, [f64; 2])> {
    let (ba, bb) = (bounds(a), bounds(b));
    if ba[1] <= bb[0] || bb[1] <= ba[0] || ba[3] <= bb[2] || bb[3] <= ba[2] {
        return None;
    }
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for q in [a, b] {
        for i in 0..2 {
            let e = sub(q[i + 1], q[i]);
            let len = e[0].hypot(e[1]);
            let axis = [-e[1] / len, e[0] / len];
            let (mut amin, mut amax) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut bmin, mut bmax) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in a {
                let d = dot(*p, axis);
                amin = amin.min(d);
                amax = amax.max(d);
            }
            for p in b {
                let d = dot(*p, axis);
                bmin = bmin.min(d);
                bmax = bmax.max(d);
            }
            let push_pos = bmax - amin;
            let push_neg = amax - bmin;
            if push_pos <= 0.0 || push_neg <= 0.0 {
                return None;
            }
            if push_pos < best.0 {
                best = (push_pos, axis);
            }
            if push_neg < best.0 {
                best = (push_neg, [-axis[0], -axis[1]]);
            }
        }
    }
    Some(best)
}

/// Sutherland-Hodgman intersection of a polygon with a convex CCW clip polygon.
pub fn clip_polygon(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge = sub(b, a);
        let inside = |p: [f64; 2]| cross(edge, sub(p, a)) >= 0.0;
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(cur), inside(prev));
            if ci != pi {
                let d = sub(cur, prev);
                let denom = cross(edge, d);
                if denom.abs() > 0.0 {
                    let t = cross(edge, sub(a, prev)) / denom;
                    out.push([prev[0] + t * d[0], prev[1] + t * d[1]]);
                }
            }
            if ci {
                out.push(cur);
            }
        }
    }
    out
}

/// Area and centroid of a simple polygon (CCW gives positive area).
pub fn polygon_area_centroid(poly: &[[f64; 2]]) -> (f64, [f64; 2]) {
    let n = poly.len();
    if n == 0 {
        return (0.0, [0.0, 0.0]);
    }
    let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let c = cross(p, q);
        a2 += c;
        cx += (p[0] + q[0]) * c;
        cy += (p[1] + q[1]) * c;
    }
    if a2.abs() < 1e-18 {
        let m = poly.iter().fold([0.0, 0.0], |s, p| [s[0] + p[0], s[1] + p[1]]);
        return (0.0, [m[0] / n as f64, m[1] / n as f64]);
    }
    (a2 / 2.0, [cx / (3.0 * a2), cy / (3.0 * a2)])
}

/// Contact wrench on the peg: force (fx, fy) and torque about the
/// end-effector origin.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Wrench {
    pub fx: f64,
    pub fy: f64,
    pub tau: f64,
}

impl Wrench {
    pub const ZERO: Wrench = Wrench { fx: 0.0, fy: 0.0, tau: 0.0 };

    pub fn to_array(self) -> [f64; 3] {
        [self.fx, self.fy, self.tau]
    }

    pub fn add(self, o: Wrench) -> Wrench {
        Wrench { fx: self.fx + o.fx, fy: self.fy + o.fy, tau: self.tau + o.tau }
    }
}

/// One active peg/block contact.
#[derive(Clone, Copy, Debug)]
pub struct Contact {
    pub depth: f64,
    pub normal: [f64; 2],
    pub point: [f64; 2],
    pub wrench: Wrench,
}

/// Penalty contacts for the peg at `ee` moving with `vel` (mm/s) and
/// `omega_deg` (deg/s) against the socket at `socket`.
pub fn contacts(
    cfg: &DomainConfig,
    ee: &Pose2,
    vel: [f64; 2],
    omega_deg: f64,
    socket: &Pose2,
) -> Vec<Contact> {
    let peg = peg_contact_quad(cfg, ee, socket);
    let mut out = Vec::new();
    for block in socket_blocks(cfg, socket) {
        let Some((depth, n)) = penetration(&peg, &block) else { continue };
        let overlap = clip_polygon(&peg, &block);
        let (_, point) = polygon_area_centroid(&overlap);
        let r = [point[0] - ee.x, point[1] - ee.y];
        let w = omega_deg.to_radians();
        let v_point = [vel[0] - w * r[1], vel[1] + w * r[0]];
        let vn = dot(v_point, n);
        let fn_mag = (cfg.contact_stiffness * depth - cfg.contact_damping * vn).max(0.0);
        let t = [-n[1], n[0]];
        let vt = dot(v_point, t);
        let limit = cfg.contact_friction * fn_mag;
        let ft = -(cfg.friction_damping * vt).clamp(-limit, limit);
        let f = [fn_mag * n[0] + ft * t[0], fn_mag * n[1] + ft * t[1]];
        let tau = match cfg.peg_shape {
            PegShape::Rectangular => cross(r, f),
            PegShape::Round => 0.0,
        };
        out.push(Contact { depth, normal: n, point, wrench: Wrench { fx: f[0], fy: f[1], tau } });
    }
    out
}
