//! Convex polygons in half-space and vertex form.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Points closer than this are treated as coincident.
pub const COINCIDENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(p: [f64; 2]) -> Self {
        Vec2::new(p[0], p[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Smallest signed difference `a − b` modulo 2π.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    /// Builds a pose with the heading wrapped into (−π, π].
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    /// Maps a point from this pose's local frame to the world frame.
    pub fn apply(&self, p: Vec2) -> Vec2 {
        p.rotate(self.theta) + self.position()
    }

    /// Maps a world point into this pose's local frame.
    pub fn apply_inverse(&self, p: Vec2) -> Vec2 {
        (p - self.position()).rotate(-self.theta)
    }

    /// `self ∘ local`: the pose `local` expressed in this pose's frame, mapped to world.
    pub fn compose(&self, local: &Pose2D) -> Pose2D {
        let p = self.apply(local.position());
        Pose2D::new(p.x, p.y, self.theta + local.theta)
    }

    /// `other` expressed in this pose's frame.
    pub fn relative(&self, other: &Pose2D) -> Pose2D {
        let p = self.apply_inverse(other.position());
        Pose2D::new(p.x, p.y, other.theta - self.theta)
    }

    pub fn inverse(&self) -> Pose2D {
        let p = (-self.position()).rotate(-self.theta);
        Pose2D::new(p.x, p.y, -self.theta)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("vertex ring is not a simple convex polygon")]
    NotConvex,
}

/// `{z : A z ≤ b}` with unit-norm rows, together with its counter-clockwise
/// vertex list. Row `i` is the outward normal of the edge from vertex `i` to
/// vertex `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolytope {
    pub normals: Vec<Vec2>,
    pub offsets: Vec<f64>,
    pub vertices: Vec<Vec2>,
}

impl ConvexPolytope {
    fn from_ccw_vertices(vertices: Vec<Vec2>) -> Self {
        let n = vertices.len();
        let mut normals = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n);
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let e = b - a;
            let normal = Vec2::new(e.y, -e.x) * (1.0 / e.norm());
            offsets.push(normal.dot(a).max(normal.dot(b)));
            normals.push(normal);
        }
        Self {
            normals,
            offsets,
            vertices,
        }
    }

    /// Axis-aligned box.
    pub fn rectangle(min: Vec2, max: Vec2) -> Self {
        Self::from_ccw_vertices(vec![
            min,
            Vec2::new(max.x, min.y),
            max,
            Vec2::new(min.x, max.y),
        ])
    }

    /// Validates a vertex ring (either orientation) as a simple convex polygon.
    pub fn from_ring(ring: &[Vec2]) -> Result<Self, GeometryError> {
        let mut pts: Vec<Vec2> = Vec::with_capacity(ring.len());
        for &p in ring {
            if pts.last().is_none_or(|q: &Vec2| q.distance(p) > COINCIDENT_TOL) {
                pts.push(p);
            }
        }
        while pts.len() > 1 && pts[0].distance(*pts.last().unwrap()) <= COINCIDENT_TOL {
            pts.pop();
        }
        let hull = hull_from_points(&pts)?;
        let n = hull.vertices.len();
        // every ring point must be a hull vertex or lie on a hull edge, and the
        // ring must visit the hull in order
        let mut signed_area = 0.0;
        for i in 0..pts.len() {
            signed_area += pts[i].cross(pts[(i + 1) % pts.len()]);
        }
        let ccw: Vec<Vec2> = if signed_area >= 0.0 {
            pts.clone()
        } else {
            pts.iter().rev().copied().collect()
        };
        for i in 0..ccw.len() {
            let a = ccw[i];
            let b = ccw[(i + 1) % ccw.len()];
            let c = ccw[(i + 2) % ccw.len()];
            if (b - a).cross(c - b) < -COINCIDENT_TOL {
                return Err(GeometryError::NotConvex);
            }
        }
        // total turning must be exactly one revolution for a simple ring
        let mut turning = 0.0;
        for i in 0..ccw.len() {
            let a = ccw[i];
            let b = ccw[(i + 1) % ccw.len()];
            let c = ccw[(i + 2) % ccw.len()];
            let e1 = b - a;
            let e2 = c - b;
            turning += e1.cross(e2).atan2(e1.dot(e2));
        }
        if (turning - TAU).abs() > 1e-6 || n < 3 {
            return Err(GeometryError::NotConvex);
        }
        Ok(hull)
    }

    pub fn num_faces(&self) -> usize {
        self.normals.len()
    }

    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        self.normals
            .iter()
            .zip(&self.offsets)
            .all(|(a, &b)| a.dot(p) <= b + tol)
    }

    pub fn centroid(&self) -> Vec2 {
        let (mut area, mut c) = (0.0, Vec2::default());
        let n = self.vertices.len();
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = p.cross(q);
            area += w;
            c = c + (p + q) * w;
        }
        c * (1.0 / (3.0 * area))
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| self.vertices[i].cross(self.vertices[(i + 1) % n]))
            .sum::<f64>()
            * 0.5
    }

    /// Support value `max_{z ∈ P} dir · z`.
    pub fn support(&self, dir: Vec2) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.dot(dir))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (lo, hi)
    }
}

/// Convex hull (Andrew's monotone chain) with collinear points removed.
pub fn hull_from_points(points: &[Vec2]) -> Result<ConvexPolytope, GeometryError> {
    let mut pts: Vec<Vec2> = points.to_vec();
    if pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(GeometryError::DegenerateInput("non-finite coordinate"));
    }
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.distance(*b) <= COINCIDENT_TOL);
    if pts.len() < 3 {
        return Err(GeometryError::DegenerateInput("fewer than 3 distinct points"));
    }

    // Orientation test scaled by edge length so the collinearity tolerance
    // is a distance.
    let left_of = |o: Vec2, a: Vec2, b: Vec2| {
        let e = a - o;
        e.cross(b - o) / e.norm().max(f64::MIN_POSITIVE) > COINCIDENT_TOL
    };
    let chain = |iter: &mut dyn Iterator<Item = &Vec2>| {
        let mut h: Vec<Vec2> = Vec::new();
        for &p in iter {
            while h.len() >= 2 && !left_of(h[h.len() - 2], h[h.len() - 1], p) {
                h.pop();
            }
            h.push(p);
        }
        h.pop();
        h
    };
    let mut hull = chain(&mut pts.iter());
    hull.extend(chain(&mut pts.iter().rev()));
    if hull.len() < 3 {
        return Err(GeometryError::DegenerateInput("all points collinear"));
    }
    Ok(ConvexPolytope::from_ccw_vertices(hull))
}

/// Rigid transform `v ↦ R(θ) v + t`; normals rotate and offsets shift so the
/// half-space form stays consistent with the vertices.
pub fn transform_polytope(p: &ConvexPolytope, pose: &Pose2D) -> ConvexPolytope {
    if pose.x == 0.0 && pose.y == 0.0 && pose.theta == 0.0 {
        return p.clone();
    }
    let t = pose.position();
    let normals: Vec<Vec2> = p.normals.iter().map(|a| a.rotate(pose.theta)).collect();
    let offsets = p
        .offsets
        .iter()
        .zip(&normals)
        .map(|(b, a)| b + a.dot(t))
        .collect();
    ConvexPolytope {
        normals,
        offsets,
        vertices: p.vertices.iter().map(|&v| pose.apply(v)).collect(),
    }
}

/// Separating-axis test on the closed sets. Touching polytopes intersect.
pub fn intersects(p: &ConvexPolytope, q: &ConvexPolytope) -> bool {
    separation_gap(p, q) <= 0.0
}

/// Largest gap along any edge normal of either polytope; positive iff the
/// polytopes are disjoint.
fn separation_gap(p: &ConvexPolytope, q: &ConvexPolytope) -> f64 {
    let mut gap = f64::NEG_INFINITY;
    for (a, &b) in p.normals.iter().zip(&p.offsets) {
        gap = gap.max(-q.support(-*a) - b);
    }
    for (a, &b) in q.normals.iter().zip(&q.offsets) {
        gap = gap.max(-p.support(-*a) - b);
    }
    gap
}

fn segment_distance(p0: Vec2, p1: Vec2, q0: Vec2, q1: Vec2) -> f64 {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.dot(d1);
    let e = d2.dot(d2);
    let f = d2.dot(r);
    let (s, t);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        return p0.distance(q0);
    }
    if a <= f64::EPSILON {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(r);
        if e <= f64::EPSILON {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    (p0 + d1 * s).distance(q0 + d2 * t)
}

/// Euclidean distance between the closed sets; exactly zero when they
/// intersect.
pub fn min_distance(p: &ConvexPolytope, q: &ConvexPolytope) -> f64 {
    if intersects(p, q) {
        return 0.0;
    }
    let (np, nq) = (p.vertices.len(), q.vertices.len());
    let mut best = f64::INFINITY;
    for i in 0..np {
        let (p0, p1) = (p.vertices[i], p.vertices[(i + 1) % np]);
        for j in 0..nq {
            let (q0, q1) = (q.vertices[j], q.vertices[(j + 1) % nq]);
            best = best.min(segment_distance(p0, p1, q0, q1));
        }
    }
    best
}

/// Closest pair `(on p, on q)` of two disjoint polytopes; `None` when they
/// intersect.
pub fn closest_points(p: &ConvexPolytope, q: &ConvexPolytope) -> Option<(Vec2, Vec2)> {
    if intersects(p, q) {
        return None;
    }
    let project = |z: Vec2, a: Vec2, b: Vec2| {
        let e = b - a;
        let t = ((z - a).dot(e) / e.dot(e)).clamp(0.0, 1.0);
        a + e * t
    };
    let mut best = (f64::INFINITY, Vec2::default(), Vec2::default());
    for (from, to, flip) in [(p, q, false), (q, p, true)] {
        let n = to.vertices.len();
        for &z in &from.vertices {
            for i in 0..n {
                let w = project(z, to.vertices[i], to.vertices[(i + 1) % n]);
                let d = z.distance(w);
                if d < best.0 {
                    best = if flip { (d, w, z) } else { (d, z, w) };
                }
            }
        }
    }
    Some((best.1, best.2))
}

/// Distance from a point to a closed polytope (zero inside).
pub fn point_distance(p: &ConvexPolytope, z: Vec2) -> f64 {
    if p.contains(z, 0.0) {
        return 0.0;
    }
    let n = p.vertices.len();
    (0..n)
        .map(|i| segment_distance(z, z, p.vertices[i], p.vertices[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Distance from the segment `a`-`b` to a closed polytope (zero on contact).
pub fn segment_distance_to(p: &ConvexPolytope, a: Vec2, b: Vec2) -> f64 {
    if p.contains(a, 0.0) || p.contains(b, 0.0) {
        return 0.0;
    }
    let n = p.vertices.len();
    (0..n)
        .map(|i| segment_distance(a, b, p.vertices[i], p.vertices[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// First parameter `t >= 0` at which `origin + t * dir` enters the polytope.
pub fn ray_hit(p: &ConvexPolytope, origin: Vec2, dir: Vec2) -> Option<f64> {
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for (n, &b) in p.normals.iter().zip(&p.offsets) {
        let den = n.dot(dir);
        let num = b - n.dot(origin);
        if den.abs() < 1e-15 {
            if num < 0.0 {
                return None;
            }
        } else if den > 0.0 {
            hi = hi.min(num / den);
        } else {
            lo = lo.max(num / den);
        }
    }
    (lo <= hi).then_some(lo)
}
