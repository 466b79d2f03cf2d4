//! Stage II: direct transcription of the turning problem with dual
//! collision-avoidance variables, solved by the interior-point layer, and a
//! solver-independent certifier for the result.
//!
//! For every time step `i < N`, obstacle `m` and body polygon `k` the dual
//! block `(λ, μ)` must satisfy
//!
//! ```text
//! -gᵀμ + (A t(x_i) - b)ᵀλ >= d_min
//!  Gᵀμ + R(θ_i)ᵀ Aᵀλ      = 0
//! |Aᵀλ|²                  <= 1,   λ, μ >= 0
//! ```
//!
//! which certifies that body `k` keeps `d_min` from obstacle `m`.

use std::time::{Duration, Instant};

use headland_nlp::{solve, NlpProblem, SolveStatus, SolverOptions, INFINITY_BOUND};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{DMinOverrides, FieldMap, ObstacleClass};
use crate::geometry::{angle_diff, min_distance, normalize_angle, point_distance, ConvexPolytope, Pose2D, Vec2};
use crate::path::{Direction, GeometricPath};
use crate::vehicle::{footprint_at, Bounds, ControlInput, Trajectory, TrajectoryOrigin, VehicleModel, VehicleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    /// Diagonal of the control-effort weight (acceleration, steering rate).
    pub q: [f64; 2],
    /// Diagonal of the control-change weight.
    pub p: [f64; 2],
    /// Weight on squared step length.
    pub w_len: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            q: [1.0, 10.0],
            p: [5.0, 50.0],
            w_len: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub weights: CostWeights,
    pub d_min: f64,
    pub d_min_overrides: DMinOverrides,
    pub kkt_tol: f64,
    pub max_iters: usize,
    /// Seconds.
    pub time_budget: f64,
    pub dual_init: f64,
    /// Cruise speed of the coarse guess; `None` drives at the speed bounds.
    pub guess_speed: Option<f64>,
    /// Extra radius beyond the vehicle size within which obstacles get dual
    /// blocks.
    pub prune_margin: f64,
    /// Start the duals at the separating multipliers of the guess instead
    /// of `dual_init`.
    pub geometric_duals: bool,
    pub verbose: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            d_min: 0.10,
            d_min_overrides: DMinOverrides::default(),
            kkt_tol: 1e-6,
            max_iters: 1000,
            time_budget: 20.0,
            dual_init: 0.05,
            guess_speed: Some(1.0),
            prune_margin: 2.0,
            geometric_duals: true,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let w = &self.weights;
        let bad = |m: &str| Err(OptimizeError::InvalidConfig(m.into()));
        if w.q.iter().chain(&w.p).any(|v| !(*v >= 0.0)) || !(w.w_len >= 0.0) {
            return bad("cost weights must be non-negative");
        }
        let overrides = [
            self.d_min_overrides.boundary,
            self.d_min_overrides.crop,
            self.d_min_overrides.obstacle,
        ];
        if !(self.d_min >= 0.0) || overrides.iter().flatten().any(|v| !(*v >= 0.0)) {
            return bad("d_min must be non-negative");
        }
        if !(self.dual_init > 0.0) {
            return bad("dual_init must be strictly positive");
        }
        if !(self.kkt_tol > 0.0) || !(self.time_budget > 0.0) || self.max_iters == 0 {
            return bad("tolerance, time budget and iteration cap must be positive");
        }
        if self.guess_speed.is_some_and(|v| !(v > 0.0)) || !(self.prune_margin >= 0.0) {
            return bad("guess speed and prune margin must be positive");
        }
        Ok(())
    }

    pub fn d_min_for(&self, class: ObstacleClass) -> f64 {
        let o = &self.d_min_overrides;
        match class {
            ObstacleClass::Boundary => o.boundary,
            ObstacleClass::Crop => o.crop,
            ObstacleClass::Obstacle => o.obstacle,
        }
        .unwrap_or(self.d_min)
    }
}

struct Phase {
    dir: Direction,
    start_s: f64,
    length: f64,
    v_peak: f64,
    accel: f64,
    duration: f64,
}

impl Phase {
    fn new(dir: Direction, start_s: f64, length: f64, v_cap: f64, accel: f64) -> Self {
        let (v_peak, duration) = if length >= v_cap * v_cap / accel {
            (v_cap, length / v_cap + v_cap / accel)
        } else {
            let v = (length * accel).sqrt();
            (v, 2.0 * v / accel)
        };
        Self {
            dir,
            start_s,
            length,
            v_peak,
            accel,
            duration,
        }
    }

    /// Distance and speed at `tau` seconds into the phase.
    fn at(&self, tau: f64) -> (f64, f64) {
        let ramp = self.v_peak / self.accel;
        let tau = tau.clamp(0.0, self.duration);
        if tau < ramp {
            (0.5 * self.accel * tau * tau, self.accel * tau)
        } else if tau <= self.duration - ramp {
            (0.5 * self.v_peak * ramp + self.v_peak * (tau - ramp), self.v_peak)
        } else {
            let left = self.duration - tau;
            (self.length - 0.5 * self.accel * left * left, self.accel * left)
        }
    }
}

/// Time-parameterizes a coarse path with a rest-to-rest trapezoidal speed
/// profile per direction phase, at the speed bounds.
pub fn coarse_to_trajectory(path: &GeometricPath, model: &VehicleModel) -> Trajectory {
    coarse_to_trajectory_with_speed(path, model, None)
}

/// Like [`coarse_to_trajectory`] with the cruise speed capped at `cruise`.
pub fn coarse_to_trajectory_with_speed(path: &GeometricPath, model: &VehicleModel, cruise: Option<f64>) -> Trajectory {
    let b = &model.bounds;
    let dt = model.dt;
    let accel = b.a_max.min(-b.a_min);
    let mut phases: Vec<Phase> = Vec::new();
    let mut s = 0.0;
    for seg in &path.segments {
        match phases.last_mut() {
            Some(p) if p.dir == seg.direction => p.length += seg.length,
            _ => phases.push(Phase::new(seg.direction, s, seg.length, 0.0, accel)),
        }
        s += seg.length;
    }
    for p in &mut phases {
        let bound = match p.dir {
            Direction::Forward => b.v_max,
            Direction::Reverse => -b.v_min,
        };
        let cap = cruise.map_or(bound, |c| c.min(bound));
        *p = Phase::new(p.dir, p.start_s, p.length, cap, accel);
    }

    let total: f64 = phases.iter().map(|p| p.duration).sum();
    let origin = TrajectoryOrigin::PatternTurn;
    if phases.is_empty() || total <= 0.0 {
        return Trajectory {
            states: vec![VehicleState::at_rest(path.start)],
            controls: Vec::new(),
            dt,
            origin,
        };
    }
    let n = ((total / dt) - 1e-9).ceil().max(1.0) as usize;
    let scale = total / (n as f64 * dt);

    let mut states = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut tau = (i as f64 * dt * scale).min(total);
        let mut k = 0;
        while k + 1 < phases.len() && tau > phases[k].duration {
            tau -= phases[k].duration;
            k += 1;
        }
        let ph = &phases[k];
        let (ds, speed) = ph.at(tau);
        let (pose, seg) = path.sample(ph.start_s + ds);
        let mut phi = (path.segments[seg].curvature * model.wheelbase).atan();
        if i == 0 || i == n {
            phi = 0.0;
        }
        let v = if i == 0 || i == n { 0.0 } else { ph.dir.sign() * speed * scale };
        states.push(VehicleState { pose, v, phi });
    }
    let controls = states
        .windows(2)
        .map(|w| ControlInput::new((w[1].v - w[0].v) / dt, (w[1].phi - w[0].phi) / dt))
        .collect();
    for st in &mut states {
        st.pose.theta = normalize_angle(st.pose.theta);
    }
    Trajectory {
        states,
        controls,
        dt,
        origin,
    }
}

/// An obstacle that receives dual blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleTerm {
    /// Position in `FieldMap::obstacles()` order.
    pub index: usize,
    pub class: ObstacleClass,
    pub poly: ConvexPolytope,
    pub d_min: f64,
}

/// Obstacles within reach of the guess: vehicle reach + diagonal + margin
/// from some guess position.
pub fn select_obstacles(guess: &Trajectory, map: &FieldMap, model: &VehicleModel, cfg: &OptimizerConfig) -> Vec<ObstacleTerm> {
    let radius = model.reach() + model.diagonal() + cfg.prune_margin;
    map.obstacles()
        .enumerate()
        .filter(|(_, (_, poly))| {
            guess
                .states
                .iter()
                .any(|s| point_distance(poly, s.pose.position()) <= radius)
        })
        .map(|(index, (class, poly))| ObstacleTerm {
            index,
            class,
            poly: poly.clone(),
            d_min: cfg.d_min_for(class),
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Pair {
    obstacle: usize,
    body: usize,
    /// Offset of λ within the step's dual block; μ follows λ.
    offset: usize,
    lam: usize,
    mu: usize,
}

/// The transcribed program. Variables are stored step by step as
/// `[x_i (5), u_i (2), duals_i]`, with only `x_N` in the last step.
pub struct TrajectoryProblem {
    pub steps: usize,
    pub dt: f64,
    wheelbase: f64,
    bounds: Bounds,
    pub start: [f64; 5],
    pub end: [f64; 5],
    weights: CostWeights,
    bodies: Vec<ConvexPolytope>,
    pub obstacles: Vec<ObstacleTerm>,
    pairs: Vec<Pair>,
    stride: usize,
    row_stride: usize,
    initial: Vec<f64>,
}

const DYN_ROWS: usize = 5;
const PAIR_ROWS: usize = 4;

impl TrajectoryProblem {
    /// Pins the boundary states, keeping headings on the guess's branch.
    pub fn set_endpoints(&mut self, start: &VehicleState, end: &VehicleState) {
        let sn = self.state_index(self.steps);
        let mut s = start.to_array();
        s[2] = self.initial[2] + angle_diff(s[2], self.initial[2]);
        let mut e = end.to_array();
        e[2] = self.initial[sn + 2] + angle_diff(e[2], self.initial[sn + 2]);
        self.start = s;
        self.end = e;
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn state_index(&self, i: usize) -> usize {
        i * self.stride
    }

    pub fn control_index(&self, i: usize) -> usize {
        i * self.stride + 5
    }

    fn dual_index(&self, i: usize, p: usize) -> usize {
        i * self.stride + 7 + self.pairs[p].offset
    }

    /// Variable indices of the first λ and first μ of pair `p` at step `i`.
    pub fn dual_indices(&self, i: usize, p: usize) -> (usize, usize) {
        let l = self.dual_index(i, p);
        (l, l + self.pairs[p].lam)
    }

    /// Row of the distance constraint of pair `p` at step `i`; the two
    /// alignment rows and the norm row follow it.
    pub fn collision_row(&self, i: usize, p: usize) -> usize {
        self.step_row(i) + DYN_ROWS + p * PAIR_ROWS
    }

    fn start_rows(&self) -> usize {
        0
    }

    fn step_row(&self, i: usize) -> usize {
        5 + i * self.row_stride
    }

    fn end_rows(&self) -> usize {
        5 + self.steps * self.row_stride
    }

    /// Iterates `(i, pair, obstacle, body, λ index, μ index)`.
    fn blocks(&self) -> impl Iterator<Item = (usize, usize, &ConvexPolytope, &ConvexPolytope, usize, usize)> + '_ {
        (0..self.steps).flat_map(move |i| {
            self.pairs.iter().enumerate().map(move |(p, pair)| {
                let l = self.dual_index(i, p);
                (
                    i,
                    p,
                    &self.obstacles[pair.obstacle].poly,
                    &self.bodies[pair.body],
                    l,
                    l + pair.lam,
                )
            })
        })
    }

    pub fn trajectory(&self, x: &[f64]) -> Trajectory {
        let states = (0..=self.steps)
            .map(|i| {
                let s = self.state_index(i);
                VehicleState {
                    pose: Pose2D::new(x[s], x[s + 1], x[s + 2]),
                    v: x[s + 3],
                    phi: x[s + 4],
                }
            })
            .collect();
        let controls = (0..self.steps)
            .map(|i| {
                let c = self.control_index(i);
                ControlInput::new(x[c], x[c + 1])
            })
            .collect();
        Trajectory {
            states,
            controls,
            dt: self.dt,
            origin: TrajectoryOrigin::Optimized,
        }
    }

    /// Dual blocks of step `i` for every pair: `(obstacle index into
    /// `obstacles`, body, λ, μ)`.
    pub fn duals_at<'a>(&'a self, x: &'a [f64], i: usize) -> impl Iterator<Item = (usize, usize, &'a [f64], &'a [f64])> + 'a {
        self.pairs.iter().enumerate().map(move |(p, pair)| {
            let l = self.dual_index(i, p);
            (pair.obstacle, pair.body, &x[l..l + pair.lam], &x[l + pair.lam..l + pair.lam + pair.mu])
        })
    }

    fn jacobian_walk(&self, x: &[f64], emit: &mut dyn FnMut(usize, usize, f64)) {
        let dt = self.dt;
        let l = self.wheelbase;
        for j in 0..5 {
            emit(self.start_rows() + j, self.state_index(0) + j, 1.0);
        }
        for i in 0..self.steps {
            let s = self.state_index(i);
            let c = self.control_index(i);
            let nx = self.state_index(i + 1);
            let r = self.step_row(i);
            let (th, v, phi) = (x[s + 2], x[s + 3], x[s + 4]);
            let (sin, cos) = th.sin_cos();
            let tan = phi.tan();
            for j in 0..5 {
                emit(r + j, nx + j, 1.0);
                emit(r + j, s + j, -1.0);
            }
            emit(r, s + 2, v * sin * dt);
            emit(r, s + 3, -cos * dt);
            emit(r + 1, s + 2, -v * cos * dt);
            emit(r + 1, s + 3, -sin * dt);
            emit(r + 2, s + 3, -tan / l * dt);
            emit(r + 2, s + 4, -v * (1.0 + tan * tan) / l * dt);
            emit(r + 3, c, -dt);
            emit(r + 4, c + 1, -dt);
        }
        for (i, p, obs, body, lam, mu) in self.blocks() {
            let s = self.state_index(i);
            let r = self.step_row(i) + DYN_ROWS + p * PAIR_ROWS;
            let t = Vec2::new(x[s], x[s + 1]);
            let (sin, cos) = x[s + 2].sin_cos();
            let mut cvec = Vec2::new(0.0, 0.0);
            for (j, a) in obs.normals.iter().enumerate() {
                cvec = cvec + *a * x[lam + j];
            }
            emit(r, s, cvec.x);
            emit(r, s + 1, cvec.y);
            for (j, (a, b)) in obs.normals.iter().zip(&obs.offsets).enumerate() {
                emit(r, lam + j, a.dot(t) - b);
            }
            for (l, g) in body.offsets.iter().enumerate() {
                emit(r, mu + l, -g);
            }
            emit(r + 1, s + 2, -sin * cvec.x + cos * cvec.y);
            emit(r + 2, s + 2, -cos * cvec.x - sin * cvec.y);
            for (j, a) in obs.normals.iter().enumerate() {
                emit(r + 1, lam + j, cos * a.x + sin * a.y);
                emit(r + 2, lam + j, -sin * a.x + cos * a.y);
                emit(r + 3, lam + j, 2.0 * cvec.dot(*a));
            }
            for (l, g) in body.normals.iter().enumerate() {
                emit(r + 1, mu + l, g.x);
                emit(r + 2, mu + l, g.y);
            }
        }
        for j in 0..5 {
            emit(self.end_rows() + j, self.state_index(self.steps) + j, 1.0);
        }
    }

    fn hessian_walk(&self, x: &[f64], obj_factor: f64, y: &[f64], emit: &mut dyn FnMut(usize, usize, f64)) {
        let dt = self.dt;
        let l = self.wheelbase;
        let w = &self.weights;
        for i in 0..self.steps {
            let s = self.state_index(i);
            let c = self.control_index(i);
            let first = i == 0;
            for k in 0..2 {
                let mut d = 2.0 * w.q[k];
                if !first {
                    d += 2.0 * w.p[k];
                }
                if i + 1 < self.steps {
                    d += 2.0 * w.p[k];
                }
                emit(c + k, c + k, obj_factor * d);
                if !first {
                    emit(c + k, self.control_index(i - 1) + k, -2.0 * w.p[k] * obj_factor);
                }
            }
            emit(s + 3, s + 3, obj_factor * 2.0 * w.w_len * dt * dt);

            let r = self.step_row(i);
            let (th, v, phi) = (x[s + 2], x[s + 3], x[s + 4]);
            let (sin, cos) = th.sin_cos();
            let tan = phi.tan();
            let sec2 = 1.0 + tan * tan;
            let (y0, y1, y2) = (y[r], y[r + 1], y[r + 2]);
            emit(s + 2, s + 2, y0 * v * cos * dt + y1 * v * sin * dt);
            emit(s + 3, s + 2, y0 * sin * dt - y1 * cos * dt);
            emit(s + 4, s + 3, -y2 * sec2 / l * dt);
            emit(s + 4, s + 4, -y2 * 2.0 * v * sec2 * tan / l * dt);
        }
        for (i, p, obs, _body, lam, _mu) in self.blocks() {
            let s = self.state_index(i);
            let r = self.step_row(i) + DYN_ROWS + p * PAIR_ROWS;
            let (yf, y1, y2, yh) = (y[r], y[r + 1], y[r + 2], y[r + 3]);
            let (sin, cos) = x[s + 2].sin_cos();
            let mut cvec = Vec2::new(0.0, 0.0);
            for (j, a) in obs.normals.iter().enumerate() {
                cvec = cvec + *a * x[lam + j];
            }
            emit(
                s + 2,
                s + 2,
                y1 * (-cos * cvec.x - sin * cvec.y) + y2 * (sin * cvec.x - cos * cvec.y),
            );
            for (j, a) in obs.normals.iter().enumerate() {
                emit(lam + j, s, yf * a.x);
                emit(lam + j, s + 1, yf * a.y);
                emit(
                    lam + j,
                    s + 2,
                    y1 * (-sin * a.x + cos * a.y) + y2 * (-cos * a.x - sin * a.y),
                );
                for (jj, aa) in obs.normals.iter().enumerate().take(j + 1) {
                    emit(lam + j, lam + jj, 2.0 * yh * a.dot(*aa));
                }
            }
        }
    }
}

impl NlpProblem for TrajectoryProblem {
    fn num_variables(&self) -> usize {
        self.steps * self.stride + 5
    }

    fn num_constraints(&self) -> usize {
        10 + self.steps * self.row_stride
    }

    fn variable_bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        lower.fill(-INFINITY_BOUND);
        upper.fill(INFINITY_BOUND);
        let b = &self.bounds;
        for i in 0..=self.steps {
            let s = self.state_index(i);
            lower[s + 3] = b.v_min;
            upper[s + 3] = b.v_max;
            lower[s + 4] = -b.phi_max;
            upper[s + 4] = b.phi_max;
            if i < self.steps {
                let c = self.control_index(i);
                lower[c] = b.a_min;
                upper[c] = b.a_max;
                lower[c + 1] = -b.steer_rate_max;
                upper[c + 1] = b.steer_rate_max;
                let d0 = c + 2;
                lower[d0..(i + 1) * self.stride].fill(0.0);
            }
        }
    }

    fn constraint_bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        lower.fill(0.0);
        upper.fill(0.0);
        for j in 0..5 {
            lower[self.start_rows() + j] = self.start[j];
            upper[self.start_rows() + j] = self.start[j];
            lower[self.end_rows() + j] = self.end[j];
            upper[self.end_rows() + j] = self.end[j];
        }
        for i in 0..self.steps {
            for (p, pair) in self.pairs.iter().enumerate() {
                let r = self.step_row(i) + DYN_ROWS + p * PAIR_ROWS;
                lower[r] = self.obstacles[pair.obstacle].d_min;
                upper[r] = INFINITY_BOUND;
                lower[r + 3] = -INFINITY_BOUND;
                upper[r + 3] = 1.0;
            }
        }
    }

    fn initial_point(&self, x: &mut [f64]) {
        x.copy_from_slice(&self.initial);
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let w = &self.weights;
        let mut f = 0.0;
        for i in 0..self.steps {
            let c = self.control_index(i);
            let v = x[self.state_index(i) + 3];
            f += w.q[0] * x[c] * x[c] + w.q[1] * x[c + 1] * x[c + 1];
            f += w.w_len * (v * self.dt).powi(2);
            if i > 0 {
                let pc = self.control_index(i - 1);
                f += w.p[0] * (x[c] - x[pc]).powi(2) + w.p[1] * (x[c + 1] - x[pc + 1]).powi(2);
            }
        }
        f
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        let w = &self.weights;
        for i in 0..self.steps {
            let c = self.control_index(i);
            let s = self.state_index(i);
            grad[c] += 2.0 * w.q[0] * x[c];
            grad[c + 1] += 2.0 * w.q[1] * x[c + 1];
            grad[s + 3] += 2.0 * w.w_len * self.dt * self.dt * x[s + 3];
            if i > 0 {
                let pc = self.control_index(i - 1);
                for k in 0..2 {
                    let d = 2.0 * w.p[k] * (x[c + k] - x[pc + k]);
                    grad[c + k] += d;
                    grad[pc + k] -= d;
                }
            }
        }
    }

    fn constraints(&self, x: &[f64], g: &mut [f64]) {
        let dt = self.dt;
        let s0 = self.state_index(0);
        let sn = self.state_index(self.steps);
        for j in 0..5 {
            g[self.start_rows() + j] = x[s0 + j];
            g[self.end_rows() + j] = x[sn + j];
        }
        for i in 0..self.steps {
            let s = self.state_index(i);
            let c = self.control_index(i);
            let nx = self.state_index(i + 1);
            let r = self.step_row(i);
            let (th, v, phi) = (x[s + 2], x[s + 3], x[s + 4]);
            g[r] = x[nx] - x[s] - v * th.cos() * dt;
            g[r + 1] = x[nx + 1] - x[s + 1] - v * th.sin() * dt;
            g[r + 2] = x[nx + 2] - th - v * phi.tan() / self.wheelbase * dt;
            g[r + 3] = x[nx + 3] - v - x[c] * dt;
            g[r + 4] = x[nx + 4] - phi - x[c + 1] * dt;
        }
        for (i, p, obs, body, lam, mu) in self.blocks() {
            let s = self.state_index(i);
            let r = self.step_row(i) + DYN_ROWS + p * PAIR_ROWS;
            let t = Vec2::new(x[s], x[s + 1]);
            let (sin, cos) = x[s + 2].sin_cos();
            let mut cvec = Vec2::new(0.0, 0.0);
            let mut f = 0.0;
            for (j, (a, b)) in obs.normals.iter().zip(&obs.offsets).enumerate() {
                cvec = cvec + *a * x[lam + j];
                f += x[lam + j] * (a.dot(t) - b);
            }
            let mut gm = Vec2::new(0.0, 0.0);
            for (l, (gn, go)) in body.normals.iter().zip(&body.offsets).enumerate() {
                f -= go * x[mu + l];
                gm = gm + *gn * x[mu + l];
            }
            g[r] = f;
            g[r + 1] = gm.x + cos * cvec.x + sin * cvec.y;
            g[r + 2] = gm.y - sin * cvec.x + cos * cvec.y;
            g[r + 3] = cvec.dot(cvec);
        }
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let zeros = vec![0.0; self.num_variables()];
        let mut out = Vec::new();
        self.jacobian_walk(&zeros, &mut |r, c, _| out.push((r, c)));
        out
    }

    fn jacobian_values(&self, x: &[f64], values: &mut [f64]) {
        let mut k = 0;
        self.jacobian_walk(x, &mut |_, _, v| {
            values[k] = v;
            k += 1;
        });
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        let zeros = vec![0.0; self.num_variables()];
        let y = vec![0.0; self.num_constraints()];
        let mut out = Vec::new();
        self.hessian_walk(&zeros, 0.0, &y, &mut |r, c, _| out.push((r.max(c), r.min(c))));
        out
    }

    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], values: &mut [f64]) {
        let mut k = 0;
        self.hessian_walk(x, obj_factor, lambda, &mut |_, _, v| {
            values[k] = v;
            k += 1;
        });
    }
}

/// Every dual variable set to `cfg.dual_init`, one block per
/// `(step, obstacle, body)`.
pub fn initialize_duals(problem: &TrajectoryProblem, cfg: &OptimizerConfig) -> Result<Vec<f64>, OptimizeError> {
    if !(cfg.dual_init > 0.0) {
        return Err(OptimizeError::InvalidConfig("dual_init must be strictly positive".into()));
    }
    let per_step: usize = problem.pairs.iter().map(|p| p.lam + p.mu).sum();
    Ok(vec![cfg.dual_init; per_step * problem.steps])
}

/// Non-negative weights on `normals` (unit, counter-clockwise) that combine
/// to the unit vector `dir`, using the face or face pair whose normal cone
/// contains it.
fn cone_weights(normals: &[Vec2], dir: Vec2) -> Vec<f64> {
    let n = normals.len();
    let mut w = vec![0.0; n];
    let j = (0..n)
        .max_by(|&a, &b| normals[a].dot(dir).total_cmp(&normals[b].dot(dir)))
        .unwrap();
    if normals[j].dot(dir) >= 1.0 - 1e-12 {
        w[j] = 1.0;
        return w;
    }
    for k in [(j + n - 1) % n, (j + 1) % n] {
        let (a, b) = (normals[j], normals[k]);
        let det = a.cross(b);
        if det.abs() < 1e-12 {
            continue;
        }
        let alpha = dir.cross(b) / det;
        let beta = a.cross(dir) / det;
        if alpha >= -1e-12 && beta >= -1e-12 {
            w[j] = alpha.max(0.0);
            w[k] = beta.max(0.0);
            return w;
        }
    }
    w[j] = 1.0;
    w
}

/// Duals that certify the guess's own clearance: for every block the
/// multipliers of the closest-point separating direction, scaled by
/// `scale < 1` so `|Aᵀλ| < 1`. Touching pairs get `cfg.dual_init`.
pub fn geometric_duals(problem: &TrajectoryProblem, x: &[f64], cfg: &OptimizerConfig, scale: f64) -> Vec<f64> {
    let per_step: usize = problem.pairs.iter().map(|p| p.lam + p.mu).sum();
    let mut out = vec![cfg.dual_init; per_step * problem.steps];
    for i in 0..problem.steps {
        let s = problem.state_index(i);
        let pose = Pose2D::new(x[s], x[s + 1], x[s + 2]);
        for pair in &problem.pairs {
            let obs = &problem.obstacles[pair.obstacle].poly;
            let body = &problem.bodies[pair.body];
            let world = crate::geometry::transform_polytope(body, &pose);
            let Some((on_obs, on_body)) = crate::geometry::closest_points(obs, &world) else {
                continue;
            };
            let gap = on_body - on_obs;
            let dist = gap.norm();
            if dist < 1e-9 {
                continue;
            }
            let dir = gap * (1.0 / dist);
            let lam = cone_weights(&obs.normals, dir);
            let mu = cone_weights(&body.normals, (-dir).rotate(-pose.theta));
            let base = i * per_step + pair.offset;
            for (j, v) in lam.iter().chain(&mu).enumerate() {
                out[base + j] = v * scale;
            }
        }
    }
    out
}

/// Transcribes the problem around `guess`, which fixes `N` and the
/// boundary states.
pub fn build_problem(
    guess: &Trajectory,
    map: &FieldMap,
    model: &VehicleModel,
    cfg: &OptimizerConfig,
) -> Result<TrajectoryProblem, OptimizeError> {
    let obstacles = select_obstacles(guess, map, model, cfg);
    build_problem_with(guess, obstacles, model, cfg)
}

/// Like [`build_problem`] with an explicit obstacle set.
pub fn build_problem_with(
    guess: &Trajectory,
    obstacles: Vec<ObstacleTerm>,
    model: &VehicleModel,
    cfg: &OptimizerConfig,
) -> Result<TrajectoryProblem, OptimizeError> {
    cfg.validate()?;
    if guess.states.is_empty() || guess.states.len() != guess.controls.len() + 1 {
        return Err(OptimizeError::DimensionMismatch(format!(
            "{} states for {} controls",
            guess.states.len(),
            guess.controls.len()
        )));
    }
    if (guess.dt - model.dt).abs() > 1e-12 {
        return Err(OptimizeError::DimensionMismatch("guess dt differs from the model".into()));
    }
    let steps = guess.controls.len();
    let mut pairs = Vec::new();
    let mut offset = 0;
    for (m, o) in obstacles.iter().enumerate() {
        for (k, b) in model.bodies.iter().enumerate() {
            let (lam, mu) = (o.poly.num_faces(), b.num_faces());
            pairs.push(Pair {
                obstacle: m,
                body: k,
                offset,
                lam,
                mu,
            });
            offset += lam + mu;
        }
    }
    let stride = 7 + offset;
    let row_stride = DYN_ROWS + PAIR_ROWS * pairs.len();

    let thetas = crate::vehicle::unwrap_headings(guess.states.iter().map(|s| s.pose.theta));
    let mut problem = TrajectoryProblem {
        steps,
        dt: model.dt,
        wheelbase: model.wheelbase,
        bounds: model.bounds,
        start: [0.0; 5],
        end: [0.0; 5],
        weights: cfg.weights.clone(),
        bodies: model.bodies.clone(),
        obstacles,
        pairs,
        stride,
        row_stride,
        initial: Vec::new(),
    };
    let mut x = vec![0.0; problem.num_variables()];
    for (i, st) in guess.states.iter().enumerate() {
        let s = problem.state_index(i);
        x[s..s + 5].copy_from_slice(&[st.pose.x, st.pose.y, thetas[i], st.v, st.phi]);
    }
    for (i, u) in guess.controls.iter().enumerate() {
        let c = problem.control_index(i);
        x[c] = u.accel;
        x[c + 1] = u.steer_rate;
    }
    let duals = if cfg.geometric_duals {
        geometric_duals(&problem, &x, cfg, 0.99)
    } else {
        initialize_duals(&problem, cfg)?
    };
    let per_step = offset;
    for i in 0..steps {
        let d0 = problem.control_index(i) + 2;
        x[d0..d0 + per_step].copy_from_slice(&duals[i * per_step..(i + 1) * per_step]);
    }
    problem.start = x[0..5].try_into().unwrap();
    let sn = problem.state_index(steps);
    problem.end = x[sn..sn + 5].try_into().unwrap();
    problem.initial = x;
    Ok(problem)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveOutcome {
    Optimal,
    FeasibleSuboptimal,
    FallbackCoarse,
    Infeasible,
    TimedOut,
}

impl SolveOutcome {
    pub fn is_success(self) -> bool {
        matches!(
            self,
            SolveOutcome::Optimal | SolveOutcome::FeasibleSuboptimal | SolveOutcome::FallbackCoarse
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub stage1_s: f64,
    pub stage2_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub passed: bool,
    pub dynamics_residual: f64,
    pub bound_violation: f64,
    pub endpoint_position_error: f64,
    pub endpoint_heading_error: f64,
    /// Smallest `distance - d_min` over every (step, obstacle, body).
    pub clearance_margin: f64,
    /// `(step, obstacle, body)` attaining `clearance_margin`.
    pub worst: Option<(usize, usize, usize)>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveOutcome,
    pub trajectory: Trajectory,
    pub objective: f64,
    pub kkt_residual: f64,
    pub certificate: CertificateReport,
    pub iterations: usize,
    pub solver_status: Option<SolveStatus>,
    pub timings: StageTimings,
    /// Final primal-dual vector of the program, empty for fallbacks.
    pub solution: Vec<f64>,
    pub log: Vec<String>,
}

pub const DYNAMICS_TOL: f64 = 1e-6;
pub const ENDPOINT_POSITION_TOL: f64 = 1e-4;
pub const ENDPOINT_HEADING_TOL: f64 = 1e-4;
pub const CLEARANCE_TOL: f64 = 1e-3;
const BOUND_TOL: f64 = 1e-7;

/// Checks a trajectory against the model, the requested boundary states and
/// every obstacle of the map, without using any solver output.
pub fn certify_solution(
    traj: &Trajectory,
    start: &VehicleState,
    end: &VehicleState,
    map: &FieldMap,
    model: &VehicleModel,
    cfg: &OptimizerConfig,
) -> CertificateReport {
    let mut failures = Vec::new();
    let dynamics_residual = if traj.states.len() == traj.controls.len() + 1 {
        traj.dynamics_residual(model)
    } else {
        failures.push("state and control counts disagree".into());
        f64::INFINITY
    };
    if dynamics_residual > DYNAMICS_TOL {
        failures.push(format!("dynamics residual {dynamics_residual:.3e}"));
    }

    let b = &model.bounds;
    let over = |v: f64, lo: f64, hi: f64| (lo - v).max(v - hi).max(0.0);
    let mut bound_violation: f64 = 0.0;
    for s in &traj.states {
        bound_violation = bound_violation
            .max(over(s.v, b.v_min, b.v_max))
            .max(over(s.phi, -b.phi_max, b.phi_max));
    }
    for u in &traj.controls {
        bound_violation = bound_violation
            .max(over(u.accel, b.a_min, b.a_max))
            .max(over(u.steer_rate, -b.steer_rate_max, b.steer_rate_max));
    }
    if bound_violation > BOUND_TOL {
        failures.push(format!("box bounds violated by {bound_violation:.3e}"));
    }

    let (first, last) = match (traj.states.first(), traj.states.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => {
            failures.push("empty trajectory".into());
            return CertificateReport {
                passed: false,
                dynamics_residual,
                bound_violation,
                endpoint_position_error: f64::INFINITY,
                endpoint_heading_error: f64::INFINITY,
                clearance_margin: f64::NEG_INFINITY,
                worst: None,
                failures,
            };
        }
    };
    let mut pos_err: f64 = 0.0;
    let mut head_err: f64 = 0.0;
    for (got, want) in [(first, start), (last, end)] {
        pos_err = pos_err.max(got.pose.position().distance(want.pose.position()));
        head_err = head_err.max(angle_diff(got.pose.theta, want.pose.theta).abs());
        pos_err = pos_err.max((got.v - want.v).abs()).max((got.phi - want.phi).abs());
    }
    if pos_err > ENDPOINT_POSITION_TOL || head_err > ENDPOINT_HEADING_TOL {
        failures.push(format!("endpoint error {pos_err:.3e} m / {head_err:.3e} rad"));
    }

    let obstacles: Vec<(ObstacleClass, &ConvexPolytope, Vec2, f64)> = map
        .obstacles()
        .map(|(c, p)| {
            let (lo, hi) = p.bounds();
            let centre = (lo + hi) * 0.5;
            let r = p.vertices.iter().map(|v| v.distance(centre)).fold(0.0, f64::max);
            (c, p, centre, r)
        })
        .collect();
    let reach = model.reach();
    let mut margin = f64::INFINITY;
    let mut worst = None;
    for (i, s) in traj.states.iter().enumerate() {
        let feet = footprint_at(model, &s.pose);
        for (m, (class, poly, centre, r)) in obstacles.iter().enumerate() {
            let need = cfg.d_min_for(*class);
            let lower = s.pose.position().distance(*centre) - r - reach - need;
            if lower > margin.min(1.0) {
                continue;
            }
            for (k, f) in feet.iter().enumerate() {
                let d = min_distance(f, poly) - need;
                if d < margin {
                    margin = d;
                    worst = Some((i, m, k));
                }
            }
        }
    }
    if margin < -CLEARANCE_TOL {
        let (i, m, k) = worst.unwrap();
        failures.push(format!(
            "clearance {:.4} m below d_min at step {i}, obstacle {m}, body {k}",
            -margin
        ));
    }
    CertificateReport {
        passed: failures.is_empty(),
        dynamics_residual,
        bound_violation,
        endpoint_position_error: pos_err,
        endpoint_heading_error: head_err,
        clearance_margin: margin,
        worst,
        failures,
    }
}

/// Objective of a trajectory under the program's cost.
pub fn trajectory_objective(traj: &Trajectory, w: &CostWeights) -> f64 {
    let mut f = 0.0;
    for (i, u) in traj.controls.iter().enumerate() {
        f += w.q[0] * u.accel * u.accel + w.q[1] * u.steer_rate * u.steer_rate;
        f += w.w_len * (traj.states[i].v * traj.dt).powi(2);
        if i > 0 {
            let p = traj.controls[i - 1];
            f += w.p[0] * (u.accel - p.accel).powi(2) + w.p[1] * (u.steer_rate - p.steer_rate).powi(2);
        }
    }
    f
}

fn wrap_states(mut t: Trajectory) -> Trajectory {
    for s in &mut t.states {
        s.pose.theta = normalize_angle(s.pose.theta);
    }
    t
}

/// Solves the program from its warm start. On failure, a guess that passes
/// the certifier is returned as `FallbackCoarse`.
pub fn solve_trajectory(
    problem: &TrajectoryProblem,
    guess: &Trajectory,
    map: &FieldMap,
    model: &VehicleModel,
    cfg: &OptimizerConfig,
    deadline: Option<Instant>,
) -> SolveReport {
    let began = Instant::now();
    let mut deadline_at = began + Duration::from_secs_f64(cfg.time_budget);
    if let Some(d) = deadline {
        deadline_at = deadline_at.min(d);
    }
    let start = VehicleState::from_array(problem.start);
    let end = VehicleState::from_array(problem.end);
    let certify = |t: &Trajectory| certify_solution(t, &start, &end, map, model, cfg);

    let options = SolverOptions {
        tol: cfg.kkt_tol,
        constr_viol_tol: 1e-9,
        acceptable_tol: (cfg.kkt_tol * 1e3).max(1e-4),
        acceptable_constr_viol_tol: 1e-8,
        max_iter: cfg.max_iters,
        max_time: Some(deadline_at.saturating_duration_since(Instant::now())),
        verbose: cfg.verbose,
        ..SolverOptions::default()
    };
    let sol = if problem.steps == 0 {
        None
    } else {
        Some(solve(problem, &options))
    };

    let report = |status, trajectory: Trajectory, certificate, sol: Option<&headland_nlp::Solution>| SolveReport {
        status,
        objective: trajectory_objective(&trajectory, &cfg.weights),
        trajectory,
        kkt_residual: sol.map_or(0.0, |s| s.kkt_error),
        certificate,
        iterations: sol.map_or(0, |s| s.iterations),
        solver_status: sol.map(|s| s.status),
        timings: StageTimings {
            stage1_s: 0.0,
            stage2_s: began.elapsed().as_secs_f64(),
        },
        solution: sol.map_or_else(Vec::new, |s| s.x.clone()),
        log: sol.map_or_else(Vec::new, |s| s.log.clone()),
    };

    if let Some(sol) = &sol {
        let traj = wrap_states(problem.trajectory(&sol.x));
        let cert = certify(&traj);
        if cert.passed {
            let status = if sol.status == SolveStatus::Optimal {
                SolveOutcome::Optimal
            } else {
                SolveOutcome::FeasibleSuboptimal
            };
            return report(status, traj, cert, Some(sol));
        }
        let coarse_cert = certify(guess);
        if coarse_cert.passed {
            let mut r = report(SolveOutcome::FallbackCoarse, guess.clone(), coarse_cert, None);
            r.iterations = sol.iterations;
            r.solver_status = Some(sol.status);
            return r;
        }
        let status = if sol.status == SolveStatus::TimeLimit || Instant::now() >= deadline_at {
            SolveOutcome::TimedOut
        } else {
            SolveOutcome::Infeasible
        };
        return report(status, traj, cert, Some(sol));
    }
    let cert = certify(guess);
    let status = if cert.passed {
        SolveOutcome::Optimal
    } else {
        SolveOutcome::Infeasible
    };
    report(status, guess.clone(), cert, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{PathSegment, DEFAULT_DS};
    use crate::vehicle::rollout;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map_with(obstacles: Vec<ConvexPolytope>) -> FieldMap {
        FieldMap {
            boundary_obstacles: Vec::new(),
            crop_rows: Vec::new(),
            static_obstacles: obstacles,
            row_endpoints: Vec::new(),
            typical: None,
        }
    }

    fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> ConvexPolytope {
        ConvexPolytope::rectangle(Vec2::new(x0, y0), Vec2::new(x1, y1))
    }

    fn straight(len: f64) -> GeometricPath {
        GeometricPath::from_segments(
            Pose2D::new(0.0, 0.0, 0.0),
            vec![PathSegment::line(len, Direction::Forward)],
            DEFAULT_DS,
        )
    }

    #[test]
    fn straight_guess_duration_and_steps() {
        let model = VehicleModel::tractor();
        let t = coarse_to_trajectory(&straight(10.0), &model);
        // 10/2 + 2/0.6 seconds, 0.2 s steps
        assert_eq!(t.controls.len(), 42);
        assert!((t.duration() - 8.4).abs() < 1e-9);
        let last = t.states.last().unwrap();
        assert!((last.pose.x - 10.0).abs() < 1e-9 && last.v == 0.0);
        assert!(t.states.iter().all(|s| s.v <= 2.0 + 1e-12));
    }

    #[test]
    fn empty_path_gives_single_state() {
        let model = VehicleModel::tractor();
        let p = GeometricPath::from_segments(Pose2D::new(1.0, 2.0, 0.3), Vec::new(), DEFAULT_DS);
        let t = coarse_to_trajectory(&p, &model);
        assert_eq!(t.states.len(), 1);
        assert!(t.controls.is_empty());
    }

    #[test]
    fn switchback_guess_changes_sign_and_respects_accel() {
        let model = VehicleModel::tractor();
        let r = crate::vehicle::min_turn_radius(&model);
        let p = GeometricPath::from_segments(
            Pose2D::new(0.0, 0.0, 0.0),
            vec![
                PathSegment::arc(1.0 / r, 3.0, Direction::Forward),
                PathSegment::line(2.0, Direction::Reverse),
                PathSegment::arc(-1.0 / r, 1.0, Direction::Forward),
            ],
            DEFAULT_DS,
        );
        let t = coarse_to_trajectory(&p, &model);
        assert_eq!(t.direction_changes(), 2);
        for u in &t.controls {
            assert!(u.accel.abs() <= 0.6 + 1e-9, "{}", u.accel);
        }
        let end = p.end_pose();
        let last = t.states.last().unwrap();
        assert!(last.pose.position().distance(end.position()) < 1e-9);
        assert!(angle_diff(last.pose.theta, end.theta).abs() < 1e-9);
    }

    #[test]
    fn variable_count_matches_layout() {
        let model = VehicleModel::tractor();
        let guess = coarse_to_trajectory(&straight(10.0), &model);
        let obstacles: Vec<_> = (0..5)
            .map(|m| rect(m as f64 * 2.0, m as f64 * 2.0 + 1.0, 3.0, 4.0))
            .collect();
        let map = map_with(obstacles);
        let p = build_problem(&guess, &map, &model, &OptimizerConfig::default()).unwrap();
        assert_eq!(p.steps, 42);
        assert_eq!(p.obstacles.len(), 5);
        assert_eq!(p.num_pairs(), 5);
        // (5 + 2 + 5·(4 + 4))·42 + 5
        assert_eq!(p.num_variables(), 1979);
        assert_eq!(p.num_constraints(), 10 + 42 * (5 + 4 * 5));
    }

    #[test]
    fn pruning_drops_far_obstacles() {
        let model = VehicleModel::tractor();
        let guess = coarse_to_trajectory(&straight(10.0), &model);
        let map = map_with(vec![rect(0.0, 1.0, 3.0, 4.0), rect(0.0, 1.0, 30.0, 31.0)]);
        let obs = select_obstacles(&guess, &map, &model, &OptimizerConfig::default());
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].index, 0);
    }

    #[test]
    fn config_rejects_zero_dual_init() {
        let cfg = OptimizerConfig {
            dual_init: 0.0,
            ..OptimizerConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(OptimizeError::InvalidConfig(_))));
        let model = VehicleModel::tractor();
        let guess = coarse_to_trajectory(&straight(2.0), &model);
        assert!(build_problem(&guess, &map_with(Vec::new()), &model, &cfg).is_err());
    }

    fn small_problem() -> TrajectoryProblem {
        small_problem_with(&OptimizerConfig {
            geometric_duals: false,
            ..OptimizerConfig::default()
        })
    }

    fn small_problem_with(cfg: &OptimizerConfig) -> TrajectoryProblem {
        let model = VehicleModel::tractor();
        let guess = coarse_to_trajectory(&straight(1.0), &model);
        let map = map_with(vec![
            rect(0.0, 1.0, 2.0, 3.0),
            ConvexPolytope::from_ring(&[Vec2::new(3.0, -2.0), Vec2::new(4.0, -2.5), Vec2::new(3.5, -1.2)]).unwrap(),
        ]);
        build_problem(&guess, &map, &model, cfg).unwrap()
    }

    fn random_point(p: &TrajectoryProblem, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = vec![0.0; p.num_variables()];
        p.initial_point(&mut x);
        for v in &mut x {
            *v += rng.gen_range(-0.5..0.5);
        }
        x
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = small_problem();
        let (n, m) = (p.num_variables(), p.num_constraints());
        assert!(p.num_pairs() == 2 && p.steps >= 3);
        let jac = p.jacobian_structure();
        let hes = p.hessian_structure();
        assert!(hes.iter().all(|&(r, c)| r >= c));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-6;
        for _ in 0..20 {
            let x = random_point(&p, &mut rng);
            let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sigma = rng.gen_range(0.1..2.0);

            let mut grad = vec![0.0; n];
            p.gradient(&x, &mut grad);
            let mut jv = vec![0.0; jac.len()];
            p.jacobian_values(&x, &mut jv);
            let mut dense_j = vec![vec![0.0; n]; m];
            for (&(r, c), v) in jac.iter().zip(&jv) {
                dense_j[r][c] += v;
            }
            let mut hv = vec![0.0; hes.len()];
            p.hessian_values(&x, sigma, &y, &mut hv);
            let mut dense_h = vec![vec![0.0; n]; n];
            for (&(r, c), v) in hes.iter().zip(&hv) {
                dense_h[r][c] += v;
                if r != c {
                    dense_h[c][r] += v;
                }
            }

            let lag_grad = |z: &[f64]| {
                let mut g = vec![0.0; n];
                p.gradient(z, &mut g);
                let mut vals = vec![0.0; jac.len()];
                p.jacobian_values(z, &mut vals);
                for gi in &mut g {
                    *gi *= sigma;
                }
                for (&(r, c), v) in jac.iter().zip(&vals) {
                    g[c] += y[r] * v;
                }
                g
            };

            for j in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (p.objective(&xp) - p.objective(&xm)) / (2.0 * h);
                assert!((fd - grad[j]).abs() < 1e-5 * (1.0 + fd.abs()), "gradient {j}");
                let mut gp = vec![0.0; m];
                let mut gm = vec![0.0; m];
                p.constraints(&xp, &mut gp);
                p.constraints(&xm, &mut gm);
                for r in 0..m {
                    let fd = (gp[r] - gm[r]) / (2.0 * h);
                    assert!((fd - dense_j[r][j]).abs() < 1e-5 * (1.0 + fd.abs()), "jacobian ({r}, {j})");
                }
                let lp = lag_grad(&xp);
                let lm = lag_grad(&xm);
                for i in 0..n {
                    let fd = (lp[i] - lm[i]) / (2.0 * h);
                    assert!((fd - dense_h[i][j]).abs() < 1e-4 * (1.0 + fd.abs()), "hessian ({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn initial_point_satisfies_dual_bounds_and_endpoints() {
        let p = small_problem();
        let n = p.num_variables();
        let (mut lo, mut hi, mut x) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        p.variable_bounds(&mut lo, &mut hi);
        p.initial_point(&mut x);
        for j in 0..n {
            assert!(lo[j] <= x[j] && x[j] <= hi[j], "variable {j}");
        }
        for i in 0..p.steps {
            for (_, _, lam, mu) in p.duals_at(&x, i) {
                assert!(lam.iter().chain(mu).all(|v| *v == 0.05));
            }
        }
        let mut g = vec![0.0; p.num_constraints()];
        p.constraints(&x, &mut g);
        assert_eq!(&g[..5], &p.start[..]);
    }

    #[test]
    fn geometric_duals_certify_guess_clearance() {
        let p = small_problem_with(&OptimizerConfig::default());
        let model = VehicleModel::tractor();
        let mut x = vec![0.0; p.num_variables()];
        p.initial_point(&mut x);
        let mut g = vec![0.0; p.num_constraints()];
        p.constraints(&x, &mut g);
        let rows = 5 + 4 * p.num_pairs();
        for i in 0..p.steps {
            let s = p.state_index(i);
            let pose = Pose2D::new(x[s], x[s + 1], x[s + 2]);
            let feet = footprint_at(&model, &pose);
            for (pair, (m, k, lam, mu)) in p.duals_at(&x, i).enumerate() {
                assert!(lam.iter().chain(mu).all(|v| *v >= 0.0));
                let r = 5 + i * rows + 5 + 4 * pair;
                assert_eq!(r, p.collision_row(i, pair));
                let dist = min_distance(&feet[k], &p.obstacles[m].poly);
                assert!((g[r] - 0.99 * dist).abs() < 1e-9, "f {} vs {}", g[r], dist);
                assert!(g[r + 1].abs() < 1e-9 && g[r + 2].abs() < 1e-9);
                assert!((g[r + 3] - 0.99f64.powi(2)).abs() < 1e-9);
            }
        }
    }

    /// Random non-negative duals with `|Aᵀλ| <= 1` and `Gᵀμ = -RᵀAᵀλ` bound
    /// the true distance from below.
    #[test]
    fn dual_objective_bounds_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = VehicleModel::tractor();
        let body = &model.bodies[0];
        for _ in 0..1000 {
            let cx = rng.gen_range(-8.0..8.0);
            let cy = rng.gen_range(-8.0..8.0);
            let pts: Vec<Vec2> = (0..rng.gen_range(3..7))
                .map(|_| Vec2::new(cx + rng.gen_range(-2.0..2.0), cy + rng.gen_range(-2.0..2.0)))
                .collect();
            let Ok(obs) = crate::geometry::hull_from_points(&pts) else { continue };
            let pose = Pose2D::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-3.0..3.0));
            let lam: Vec<f64> = (0..obs.num_faces()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut c = Vec2::new(0.0, 0.0);
            for (a, l) in obs.normals.iter().zip(&lam) {
                c = c + *a * *l;
            }
            let scale = if c.norm() > 1.0 { rng.gen_range(0.2..1.0) / c.norm() } else { 1.0 };
            let lam: Vec<f64> = lam.iter().map(|l| l * scale).collect();
            let c = c * scale;
            let w = -c.rotate(-pose.theta);
            // the tractor body is an axis-aligned box in its own frame
            let mut mu = vec![0.0; body.num_faces()];
            for (l, g) in body.normals.iter().enumerate() {
                let along = g.dot(w);
                if along > 1e-12 {
                    mu[l] = along;
                }
            }
            let mut gm = Vec2::new(0.0, 0.0);
            for (g, m) in body.normals.iter().zip(&mu) {
                gm = gm + *g * *m;
            }
            assert!((gm - w).norm() < 1e-9);
            let t = pose.position();
            let mut dual = 0.0;
            for ((a, b), l) in obs.normals.iter().zip(&obs.offsets).zip(&lam) {
                dual += l * (a.dot(t) - b);
            }
            for (g, m) in body.offsets.iter().zip(&mu) {
                dual -= g * m;
            }
            let feet = footprint_at(&model, &pose);
            let dist = min_distance(&feet[0], &obs);
            assert!(dual <= dist + 1e-9, "dual {dual} > distance {dist}");
        }
    }

    #[test]
    fn certifier_accepts_rollout_and_rejects_perturbation() {
        let model = VehicleModel::tractor();
        let start = VehicleState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let controls: Vec<ControlInput> = (0..20)
            .map(|i| ControlInput::new(if i < 10 { 0.3 } else { -0.3 }, if i < 5 { 0.2 } else if i < 10 { -0.2 } else { 0.0 }))
            .collect();
        let traj = rollout(&model, &start, &controls);
        let end = *traj.states.last().unwrap();
        let cfg = OptimizerConfig::default();
        let map = map_with(vec![rect(-1.0, 8.0, 3.0, 4.0)]);
        let ok = certify_solution(&traj, &start, &end, &map, &model, &cfg);
        assert!(ok.passed, "{:?}", ok.failures);

        let mut bent = traj.clone();
        bent.states[7].pose.y += 1e-3;
        let r = certify_solution(&bent, &start, &end, &map, &model, &cfg);
        assert!(!r.passed && r.dynamics_residual > DYNAMICS_TOL);

        let r = certify_solution(&traj, &start, &VehicleState::new(50.0, 0.0, 0.0, 0.0, 0.0), &map, &model, &cfg);
        assert!(!r.passed && r.endpoint_position_error > 1.0);

        let close = map_with(vec![rect(-1.0, 8.0, 0.78, 4.0)]);
        let r = certify_solution(&traj, &start, &end, &close, &model, &cfg);
        assert!(!r.passed && r.clearance_margin < -CLEARANCE_TOL);
    }
}
