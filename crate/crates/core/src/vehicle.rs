//! Kinematic bicycle model about the rear-axle midpoint.

use serde::{Deserialize, Serialize};

use crate::geometry::{
    angle_diff, normalize_angle, transform_polytope, ConvexPolytope, GeometryError, Pose2D, Vec2,
};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2D,
    pub v: f64,
    pub phi: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, theta: f64, v: f64, phi: f64) -> Self {
        Self {
            pose: Pose2D::new(x, y, theta),
            v,
            phi,
        }
    }

    pub fn at_rest(pose: Pose2D) -> Self {
        Self {
            pose,
            v: 0.0,
            phi: 0.0,
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.pose.x, self.pose.y, self.pose.theta, self.v, self.phi]
    }

    pub fn from_array(s: [f64; 5]) -> Self {
        Self::new(s[0], s[1], s[2], s[3], s[4])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub accel: f64,
    pub steer_rate: f64,
}

impl ControlInput {
    pub fn new(accel: f64, steer_rate: f64) -> Self {
        Self { accel, steer_rate }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub v_min: f64,
    pub v_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub phi_max: f64,
    pub steer_rate_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleModel {
    pub name: String,
    pub wheelbase: f64,
    /// Body and implement polygons in the rear-axle frame (x forward).
    pub bodies: Vec<ConvexPolytope>,
    pub bounds: Bounds,
    pub dt: f64,
}

/// Serializable vehicle description; bodies are vertex rings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub bodies: Vec<Vec<Vec2>>,
    #[serde(flatten)]
    pub bounds: Bounds,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VehicleError {
    #[error("unknown vehicle preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid vehicle parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn body(x0: f64, x1: f64, y0: f64, y1: f64) -> ConvexPolytope {
    ConvexPolytope::rectangle(Vec2::new(x0, y0), Vec2::new(x1, y1))
}

const TRACTOR_BOUNDS: Bounds = Bounds {
    v_min: -1.0,
    v_max: 2.0,
    a_min: -0.6,
    a_max: 0.6,
    phi_max: 0.6,
    steer_rate_max: 0.7,
};

impl VehicleModel {
    /// Medium orchard tractor: 1.9 m wheelbase, 3.8 × 1.5 m body.
    pub fn tractor() -> Self {
        Self {
            name: "tractor".into(),
            wheelbase: 1.9,
            bodies: vec![body(-0.95, 2.85, -0.75, 0.75)],
            bounds: TRACTOR_BOUNDS,
            dt: 0.2,
        }
    }

    /// Tractor with a rear mower deck wider than the body.
    pub fn tractor_mower() -> Self {
        let mut m = Self::tractor();
        m.name = "tractor-mower".into();
        m.bodies.push(body(-2.2, -1.05, -1.0, 1.0));
        m
    }

    /// Tractor with a side-mounted pruning arm on the left.
    pub fn tractor_pruner() -> Self {
        let mut m = Self::tractor();
        m.name = "tractor-pruner".into();
        m.bodies.push(body(0.5, 1.5, 0.75, 0.95));
        m
    }

    /// Small three-wheeled robot: 1.3 m wheelbase, 1.8 × 1.2 m body.
    pub fn tricycle() -> Self {
        Self {
            name: "tricycle".into(),
            wheelbase: 1.3,
            bodies: vec![body(-0.25, 1.55, -0.6, 0.6)],
            bounds: Bounds {
                v_max: 1.0,
                ..TRACTOR_BOUNDS
            },
            dt: 0.2,
        }
    }

    pub fn preset(name: &str) -> Result<Self, VehicleError> {
        match name {
            "tractor" => Ok(Self::tractor()),
            "tractor-mower" => Ok(Self::tractor_mower()),
            "tractor-pruner" => Ok(Self::tractor_pruner()),
            "tricycle" => Ok(Self::tricycle()),
            other => Err(VehicleError::UnknownPreset(other.to_string())),
        }
    }

    pub fn from_params(name: &str, p: &VehicleParams) -> Result<Self, VehicleError> {
        let bodies = p
            .bodies
            .iter()
            .map(|ring| ConvexPolytope::from_ring(ring))
            .collect::<Result<Vec<_>, _>>()?;
        let m = Self {
            name: name.to_string(),
            wheelbase: p.wheelbase,
            bodies,
            bounds: p.bounds,
            dt: p.dt,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn params(&self) -> VehicleParams {
        VehicleParams {
            wheelbase: self.wheelbase,
            bodies: self.bodies.iter().map(|b| b.vertices.clone()).collect(),
            bounds: self.bounds,
            dt: self.dt,
        }
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        let b = &self.bounds;
        let bad = |msg: &str| Err(VehicleError::Invalid(msg.to_string()));
        if !(self.wheelbase > 0.0) {
            return bad("wheelbase must be positive");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.bodies.is_empty() {
            return bad("at least one body polygon is required");
        }
        if !(b.phi_max > 0.0 && b.phi_max < std::f64::consts::FRAC_PI_2) {
            return bad("phi_max must lie in (0, pi/2)");
        }
        if !(b.v_min <= 0.0 && b.v_max > 0.0 && b.a_min < 0.0 && b.a_max > 0.0) {
            return bad("speed and acceleration ranges must straddle zero");
        }
        if !(b.steer_rate_max > 0.0) {
            return bad("steer_rate_max must be positive");
        }
        Ok(())
    }

    /// Bounding box of all bodies in the rear-axle frame.
    pub fn extent(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for b in &self.bodies {
            let (l, h) = b.bounds();
            lo = Vec2::new(lo.x.min(l.x), lo.y.min(l.y));
            hi = Vec2::new(hi.x.max(h.x), hi.y.max(h.y));
        }
        (lo, hi)
    }

    pub fn length(&self) -> f64 {
        let (lo, hi) = self.extent();
        hi.x - lo.x
    }

    pub fn width(&self) -> f64 {
        let (lo, hi) = self.extent();
        hi.y - lo.y
    }

    /// Largest distance from the rear axle to any body vertex.
    pub fn reach(&self) -> f64 {
        self.bodies
            .iter()
            .flat_map(|b| b.vertices.iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn diagonal(&self) -> f64 {
        self.length().hypot(self.width())
    }
}

pub fn min_turn_radius(model: &VehicleModel) -> f64 {
    model.wheelbase / model.bounds.phi_max.tan()
}

/// One explicit-Euler step of length `dt`, applied to unwrapped values.
pub fn euler(wheelbase: f64, s: [f64; 5], u: [f64; 2], dt: f64) -> [f64; 5] {
    let [x, y, theta, v, phi] = s;
    [
        x + v * theta.cos() * dt,
        y + v * theta.sin() * dt,
        theta + v * phi.tan() / wheelbase * dt,
        v + u[0] * dt,
        phi + u[1] * dt,
    ]
}

pub fn step(model: &VehicleModel, x: &VehicleState, u: &ControlInput) -> VehicleState {
    step_with_dt(model, x, u, model.dt)
}

pub fn step_with_dt(model: &VehicleModel, x: &VehicleState, u: &ControlInput, dt: f64) -> VehicleState {
    let next = euler(model.wheelbase, x.to_array(), [u.accel, u.steer_rate], dt);
    VehicleState::from_array(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryOrigin {
    PatternTurn,
    HybridAStar,
    Optimized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<VehicleState>,
    pub controls: Vec<ControlInput>,
    pub dt: f64,
    pub origin: TrajectoryOrigin,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.controls.len() as f64 * self.dt
    }

    pub fn path_length(&self) -> f64 {
        self.states
            .windows(2)
            .map(|w| w[0].pose.position().distance(w[1].pose.position()))
            .sum()
    }

    /// Number of sign changes of the speed, ignoring samples at rest.
    pub fn direction_changes(&self) -> usize {
        let mut last = 0.0f64;
        let mut count = 0;
        for s in &self.states {
            if s.v.abs() > 1e-6 {
                if last != 0.0 && last.signum() != s.v.signum() {
                    count += 1;
                }
                last = s.v;
            }
        }
        count
    }

    /// Largest infinity-norm mismatch between consecutive states and the
    /// Euler model, with headings compared modulo 2π.
    pub fn dynamics_residual(&self, model: &VehicleModel) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, u) in self.controls.iter().enumerate() {
            let pred = euler(
                model.wheelbase,
                self.states[i].to_array(),
                [u.accel, u.steer_rate],
                self.dt,
            );
            let next = self.states[i + 1].to_array();
            for k in 0..5 {
                let d = if k == 2 {
                    angle_diff(pred[k], next[k])
                } else {
                    pred[k] - next[k]
                };
                worst = worst.max(d.abs());
            }
        }
        worst
    }
}

pub fn rollout(model: &VehicleModel, x0: &VehicleState, controls: &[ControlInput]) -> Trajectory {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*x0);
    for u in controls {
        let next = step(model, states.last().unwrap(), u);
        states.push(next);
    }
    Trajectory {
        states,
        controls: controls.to_vec(),
        dt: model.dt,
        origin: TrajectoryOrigin::Optimized,
    }
}

pub fn footprint_at(model: &VehicleModel, pose: &Pose2D) -> Vec<ConvexPolytope> {
    model
        .bodies
        .iter()
        .map(|b| transform_polytope(b, pose))
        .collect()
}

/// Heading unwrapped along a sequence so consecutive values differ by < π.
pub fn unwrap_headings(headings: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for h in headings {
        match out.last() {
            None => out.push(h),
            Some(&prev) => out.push(prev + angle_diff(h, prev)),
        }
    }
    out
}

pub fn wrap(theta: f64) -> f64 {
    normalize_angle(theta)
}
