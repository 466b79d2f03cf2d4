//! Shortest Reeds–Shepp paths between two poses for a given turning radius.
//!
//! Lengths are solved in the unit-radius frame of the start pose. Every word
//! family is reached from a few base solvers through the time-flip,
//! reflection and backwards symmetries.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::geometry::Pose2D;
use crate::path::{Direction, GeometricPath, PathSegment, DEFAULT_DS};

const ZERO: f64 = 10.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Steer {
    Left,
    Straight,
    Right,
}

/// A candidate in the unit-radius frame. Negative lengths drive in reverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub steps: Vec<(Steer, f64)>,
}

impl Word {
    pub fn length(&self) -> f64 {
        self.steps.iter().map(|(_, l)| l.abs()).sum()
    }

    pub fn to_segments(&self, radius: f64) -> Vec<PathSegment> {
        self.steps
            .iter()
            .filter(|(_, l)| l.abs() > ZERO)
            .map(|&(s, l)| {
                let dir = if l >= 0.0 { Direction::Forward } else { Direction::Reverse };
                let k = match s {
                    Steer::Left => 1.0 / radius,
                    Steer::Straight => 0.0,
                    Steer::Right => -1.0 / radius,
                };
                PathSegment::arc(k, l.abs() * radius, dir)
            })
            .collect()
    }
}

/// Wraps to (-pi, pi].
fn mod2pi(x: f64) -> f64 {
    let mut v = x.rem_euclid(2.0 * PI);
    if v > PI {
        v -= 2.0 * PI;
    }
    v
}

fn polar(x: f64, y: f64) -> (f64, f64) {
    (x.hypot(y), y.atan2(x))
}

fn tau_omega(u: f64, v: f64, xi: f64, eta: f64, phi: f64) -> (f64, f64) {
    let delta = mod2pi(u - v);
    let a = u.sin() - delta.sin();
    let b = u.cos() - delta.cos() - 1.0;
    let t1 = (eta * a - xi * b).atan2(xi * a + eta * b);
    let t2 = 2.0 * (delta.cos() - v.cos() - u.cos()) + 3.0;
    let tau = if t2 < 0.0 { mod2pi(t1 + PI) } else { mod2pi(t1) };
    (tau, mod2pi(tau - u + v - phi))
}

fn lp_sp_lp(x: f64, y: f64, phi: f64) -> Option<(f64, f64, f64)> {
    let (u, t) = polar(x - phi.sin(), y - 1.0 + phi.cos());
    if t >= -ZERO {
        let v = mod2pi(phi - t);
        if v >= -ZERO {
            return Some((t, u, v));
        }
    }
    None
}

fn lp_sp_rp(x: f64, y: f64, phi: f64) -> Option<(f64, f64, f64)> {
    let (u1, t1) = polar(x + phi.sin(), y - 1.0 - phi.cos());
    let u1 = u1 * u1;
    if u1 >= 4.0 {
        let u = (u1 - 4.0).sqrt();
        let theta = 2.0f64.atan2(u);
        let t = mod2pi(t1 + theta);
        let v = mod2pi(t - phi);
        if t >= -ZERO && v >= -ZERO {
            return Some((t, u, v));
        }
    }
    None
}

fn lp_rm_l(x: f64, y: f64, phi: f64) -> Option<(f64, f64, f64)> {
    let (u1, theta) = polar(x - phi.sin(), y - 1.0 + phi.cos());
    if u1 <= 4.0 {
        let u = -2.0 * (0.25 * u1).asin();
        let t = mod2pi(theta + 0.5 * u + PI);
        let v = mod2pi(phi - t + u);
        if t >= -ZERO && u <= ZERO {
            return Some((t, u, v));
        }
    }
    None
}

fn lp_rup_lum_rm(x: f64, y: f64, phi: f64) -> Option<(f64, f64, f64)> {
    let xi = x + phi.sin();
    let eta = y - 1.0 - phi.cos();
    let rho = 0.25 * (2.0 + xi.hypot(eta));
    if rho <= 1.0 {
        let u = rho.acos();
        let (t, v) = tau_omega(u, -u, xi, eta, phi);
        if t >= -ZERO && v <= ZERO {
            return Some((t, u, v));
        }
    }
    None
}

fn lp_rum_lum_rp(x: f64, y: f64, phi: f64) -> Option<(f64, f64, f64)> {
    let xi = x + phi.sin();
    let eta = y - 1.0 - phi.cos();
    let rho = (20.0 - xi * xi - eta * eta) / 16.0;
    if (0.0..=1.0).contains(&rho) {
        let u = -rho.acos();
        if u >= -FRAC_PI_2 {
            let (t, v) = tau_omega(u, u, xi, eta, phi);
            if t >= -ZERO && v >= -ZERO {
                return Some((t, u, v));
            }
        }
    }
    None
}

fn lp_rm_sm_lm(x: f64, y: f64, phi: f64) -> Option<(f64, f64, f64)> {
    let (rho, theta) = polar(x - phi.sin(), y - 1.0 + phi.cos());
    if rho >= 2.0 {
        let r = (rho * rho - 4.0).sqrt();
        let u = 2.0 - r;
        let t = mod2pi(theta + r.atan2(-2.0));
        let v = mod2pi(phi - FRAC_PI_2 - t);
        if t >= -ZERO && u <= ZERO && v <= ZERO {
            return Some((t, u, v));
        }
    }
    None
}

fn lp_rm_sm_rm(x: f64, y: f64, phi: f64) -> Option<(f64, f64, f64)> {
    let xi = x + phi.sin();
    let eta = y - 1.0 - phi.cos();
    let (rho, theta) = polar(-eta, xi);
    if rho >= 2.0 {
        let t = theta;
        let u = 2.0 - rho;
        let v = mod2pi(t + FRAC_PI_2 - phi);
        if t >= -ZERO && u <= ZERO && v <= ZERO {
            return Some((t, u, v));
        }
    }
    None
}

fn lp_rm_s_lm_rp(x: f64, y: f64, phi: f64) -> Option<(f64, f64, f64)> {
    let xi = x + phi.sin();
    let eta = y - 1.0 - phi.cos();
    let (rho, _) = polar(xi, eta);
    if rho >= 2.0 {
        let u = 4.0 - (rho * rho - 4.0).sqrt();
        if u <= ZERO {
            let t = mod2pi(((4.0 - u) * xi - 2.0 * eta).atan2(-2.0 * xi + (u - 4.0) * eta));
            let v = mod2pi(t - phi);
            if t >= -ZERO && v >= -ZERO {
                return Some((t, u, v));
            }
        }
    }
    None
}

use Steer::{Left as L, Right as R, Straight as S};

fn flip(s: Steer) -> Steer {
    match s {
        L => R,
        R => L,
        S => S,
    }
}

/// Applies a base solver under the four symmetries (identity, time flip,
/// reflection, both) and records each solution.
fn symmetric(
    out: &mut Vec<Word>,
    x: f64,
    y: f64,
    phi: f64,
    solver: fn(f64, f64, f64) -> Option<(f64, f64, f64)>,
    word: &[Steer],
    lengths: impl Fn(f64, f64, f64) -> Vec<f64>,
) {
    for (sx, sy, reflect) in [(1.0, 1.0, false), (-1.0, 1.0, false), (1.0, -1.0, true), (-1.0, -1.0, true)] {
        let timeflip = sx < 0.0;
        let sphi = if timeflip != reflect { -1.0 } else { 1.0 };
        if let Some((t, u, v)) = solver(sx * x, sy * y, sphi * phi) {
            let sign = if timeflip { -1.0 } else { 1.0 };
            let steps = word
                .iter()
                .zip(lengths(t, u, v))
                .map(|(&s, l)| (if reflect { flip(s) } else { s }, sign * l))
                .collect();
            out.push(Word { steps });
        }
    }
}

/// Every candidate word connecting the origin to `(x, y, phi)` at unit
/// radius.
pub fn candidates(x: f64, y: f64, phi: f64) -> Vec<Word> {
    let mut out = Vec::new();
    let xb = x * phi.cos() + y * phi.sin();
    let yb = x * phi.sin() - y * phi.cos();
    let fwd = |t, u, v| vec![t, u, v];
    let bwd = |t, u, v| vec![v, u, t];

    symmetric(&mut out, x, y, phi, lp_sp_lp, &[L, S, L], fwd);
    symmetric(&mut out, x, y, phi, lp_sp_rp, &[L, S, R], fwd);

    symmetric(&mut out, x, y, phi, lp_rm_l, &[L, R, L], fwd);
    symmetric(&mut out, xb, yb, phi, lp_rm_l, &[L, R, L], bwd);

    symmetric(&mut out, x, y, phi, lp_rup_lum_rm, &[L, R, L, R], |t, u, v| vec![t, u, -u, v]);
    symmetric(&mut out, x, y, phi, lp_rum_lum_rp, &[L, R, L, R], |t, u, v| vec![t, u, u, v]);

    let cc_sc = |t, u, v| vec![t, -FRAC_PI_2, u, v];
    let cs_cc = |t, u, v| vec![v, u, -FRAC_PI_2, t];
    symmetric(&mut out, x, y, phi, lp_rm_sm_lm, &[L, R, S, L], cc_sc);
    symmetric(&mut out, x, y, phi, lp_rm_sm_rm, &[L, R, S, R], cc_sc);
    symmetric(&mut out, xb, yb, phi, lp_rm_sm_lm, &[L, S, R, L], cs_cc);
    symmetric(&mut out, xb, yb, phi, lp_rm_sm_rm, &[R, S, R, L], cs_cc);

    symmetric(&mut out, x, y, phi, lp_rm_s_lm_rp, &[L, R, S, L, R], |t, u, v| {
        vec![t, -FRAC_PI_2, u, -FRAC_PI_2, v]
    });
    out
}

/// Shortest word from `start` to `end` at turning radius `radius`.
pub fn shortest_word(start: &Pose2D, end: &Pose2D, radius: f64) -> Word {
    assert!(radius > 0.0, "turning radius must be positive");
    let rel = start.relative(end);
    let best = candidates(rel.x / radius, rel.y / radius, rel.theta)
        .into_iter()
        .min_by(|a, b| a.length().total_cmp(&b.length()));
    // The straight family always admits at least one symmetric variant.
    best.unwrap_or_else(|| Word { steps: Vec::new() })
}

pub fn reeds_shepp_length(start: &Pose2D, end: &Pose2D, radius: f64) -> f64 {
    shortest_word(start, end, radius).length() * radius
}

pub fn reeds_shepp(start: &Pose2D, end: &Pose2D, radius: f64) -> GeometricPath {
    reeds_shepp_with_resolution(start, end, radius, DEFAULT_DS)
}

pub fn reeds_shepp_with_resolution(start: &Pose2D, end: &Pose2D, radius: f64, ds: f64) -> GeometricPath {
    let w = shortest_word(start, end, radius);
    GeometricPath::from_segments(*start, w.to_segments(radius), ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angle_diff;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn straight_ahead_and_behind() {
        let p = reeds_shepp(&Pose2D::default(), &Pose2D::new(5.0, 0.0, 0.0), 1.0);
        assert_eq!(p.segments.len(), 1);
        assert_eq!(p.length(), 5.0);
        assert_eq!(p.max_curvature(), 0.0);
        let b = reeds_shepp(&Pose2D::default(), &Pose2D::new(-3.0, 0.0, 0.0), 2.0);
        assert_eq!(b.length(), 3.0);
        assert_eq!(b.segments[0].direction, Direction::Reverse);
    }

    #[test]
    fn identity_is_empty() {
        let s = Pose2D::new(1.0, -2.0, 0.7);
        assert_eq!(reeds_shepp_length(&s, &s, 1.5), 0.0);
        assert!(reeds_shepp(&s, &s, 1.5).segments.is_empty());
    }

    #[test]
    fn every_candidate_reaches_the_goal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let (x, y, phi) = (rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0), rng.gen_range(-PI..PI));
            let words = candidates(x, y, phi);
            assert!(!words.is_empty());
            for w in words {
                let end = GeometricPath::from_segments(Pose2D::default(), w.to_segments(1.0), 0.5).end_pose();
                assert!((end.x - x).abs() < 1e-9 && (end.y - y).abs() < 1e-9, "{w:?}");
                assert!(angle_diff(end.theta, phi).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn scales_with_radius_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a = Pose2D::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-PI..PI));
            let b = Pose2D::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-PI..PI));
            let r = rng.gen_range(0.5..3.0);
            let l = reeds_shepp_length(&a, &b, r);
            assert!((l - reeds_shepp_length(&b, &a, r)).abs() < 1e-9);
            let scaled = |p: &Pose2D| Pose2D::new(2.0 * p.x, 2.0 * p.y, p.theta);
            assert!((2.0 * l - reeds_shepp_length(&scaled(&a), &scaled(&b), 2.0 * r)).abs() < 1e-9);
            assert!(l >= a.position().distance(b.position()) - 1e-9);
        }
    }
}
