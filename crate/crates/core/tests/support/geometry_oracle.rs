//! Brute-force distance and dynamics checks written without the library's
//! geometry.
#![allow(dead_code)]

use headland_core::field::FieldMap;
use headland_core::geometry::{ConvexPolytope, Vec2};
use headland_core::vehicle::{Trajectory, VehicleModel};

fn seg_point(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (ex, ey) = (b.0 - a.0, b.1 - a.1);
    let len2 = ex * ex + ey * ey;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * ex + (p.1 - a.1) * ey) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a.0 + t * ex, a.1 + t * ey);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 <= 0.0 && o3 * o4 <= 0.0
}

/// Inside a counter-clockwise ring (boundary included).
fn inside(p: (f64, f64), ring: &[(f64, f64)]) -> bool {
    (0..ring.len()).all(|i| orient(ring[i], ring[(i + 1) % ring.len()], p) >= 0.0)
}

fn ccw(ring: &[Vec2]) -> Vec<(f64, f64)> {
    let mut r: Vec<(f64, f64)> = ring.iter().map(|v| (v.x, v.y)).collect();
    let area: f64 = (0..r.len()).map(|i| {
        let (a, b) = (r[i], r[(i + 1) % r.len()]);
        a.0 * b.1 - a.1 * b.0
    }).sum();
    if area < 0.0 {
        r.reverse();
    }
    r
}

/// Euclidean distance between two convex polygons given by vertex rings;
/// zero when they touch or overlap.
pub fn polygon_distance(p: &[Vec2], q: &[Vec2]) -> f64 {
    let (p, q) = (ccw(p), ccw(q));
    if p.iter().any(|v| inside(*v, &q)) || q.iter().any(|v| inside(*v, &p)) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..p.len() {
        let (a, b) = (p[i], p[(i + 1) % p.len()]);
        for j in 0..q.len() {
            let (c, d) = (q[j], q[(j + 1) % q.len()]);
            if segments_cross(a, b, c, d) {
                return 0.0;
            }
            best = best.min(seg_point(a, c, d)).min(seg_point(c, a, b));
        }
    }
    best
}

/// Body corners in the world for a pose, computed by hand.
pub fn world_corners(body: &ConvexPolytope, x: f64, y: f64, theta: f64) -> Vec<Vec2> {
    let (s, c) = theta.sin_cos();
    body.vertices.iter().map(|v| Vec2::new(x + c * v.x - s * v.y, y + s * v.x + c * v.y)).collect()
}

/// Smallest body-obstacle distance along a trajectory.
pub fn min_clearance(traj: &Trajectory, map: &FieldMap, model: &VehicleModel) -> f64 {
    let obstacles: Vec<&ConvexPolytope> = map
        .boundary_obstacles
        .iter()
        .chain(&map.crop_rows)
        .chain(&map.static_obstacles)
        .collect();
    let mut best = f64::INFINITY;
    for s in &traj.states {
        for body in &model.bodies {
            let corners = world_corners(body, s.pose.x, s.pose.y, s.pose.theta);
            for o in &obstacles {
                best = best.min(polygon_distance(&corners, &o.vertices));
            }
        }
    }
    best
}

/// Largest one-step Euler residual, heading compared modulo 2π.
pub fn euler_residual(traj: &Trajectory, wheelbase: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, u) in traj.controls.iter().enumerate() {
        let (a, b) = (&traj.states[i], &traj.states[i + 1]);
        let dt = traj.dt;
        let pred = [
            a.pose.x + a.v * a.pose.theta.cos() * dt,
            a.pose.y + a.v * a.pose.theta.sin() * dt,
            a.pose.theta + a.v * a.phi.tan() / wheelbase * dt,
            a.v + u.accel * dt,
            a.phi + u.steer_rate * dt,
        ];
        let got = [b.pose.x, b.pose.y, b.pose.theta, b.v, b.phi];
        for k in 0..5 {
            let mut d = pred[k] - got[k];
            if k == 2 {
                d = d.sin().atan2(d.cos());
            }
            worst = worst.max(d.abs());
        }
    }
    worst
}

/// Largest violation of the model's box bounds.
pub fn bound_violation(traj: &Trajectory, model: &VehicleModel) -> f64 {
    let b = &model.bounds;
    let over = |v: f64, lo: f64, hi: f64| (lo - v).max(v - hi).max(0.0);
    let mut worst: f64 = 0.0;
    for s in &traj.states {
        worst = worst.max(over(s.v, b.v_min, b.v_max)).max(over(s.phi, -b.phi_max, b.phi_max));
    }
    for u in &traj.controls {
        worst = worst
            .max(over(u.accel, b.a_min, b.a_max))
            .max(over(u.steer_rate, -b.steer_rate_max, b.steer_rate_max));
    }
    worst
}
