//! NMPC trajectory tracking in closed loop against a simulated bicycle
//! plant.
//!
//! Each tick solves the horizon problem with the dynamics linearized about
//! the reference, so the program is a convex QP handed to the same
//! interior-point layer as the planner.

use headland_nlp::{solve, NlpProblem, SolveStatus, SolverOptions, INFINITY_BOUND};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angle_diff, normalize_angle, Pose2D, Vec2};
use crate::vehicle::{euler, ControlInput, Trajectory, VehicleModel, VehicleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub horizon_steps: usize,
    /// Hz.
    pub control_rate: f64,
    /// State error weights over (x, y, θ, v, φ).
    pub q: [f64; 5],
    /// Control weights over (a, φ̇).
    pub r: [f64; 2],
    pub control_penalty: ControlPenalty,
    /// Control-change weights.
    pub p: [f64; 2],
    /// Terminal weight is `terminal_multiplier · q`.
    pub terminal_multiplier: f64,
    /// Largest change of (a, φ̇) between consecutive ticks.
    pub max_control_change: [f64; 2],
    /// Plant Euler substeps per control tick.
    pub plant_substeps: usize,
    /// Extra simulated time after the reference ends, seconds.
    pub settle_time: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 60,
            control_rate: 30.0,
            q: [1.0, 1.0, 2.0, 5.0, 0.0],
            r: [0.5, 0.5],
            control_penalty: ControlPenalty::FromReference,
            p: [0.005, 0.005],
            terminal_multiplier: 20.0,
            max_control_change: [0.1, 0.1],
            plant_substeps: 4,
            settle_time: 1.0,
        }
    }
}

/// What the `r` weights penalize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlPenalty {
    /// `u - u_ref`, the departure from the reference feed-forward.
    #[default]
    FromReference,
    /// `u` itself.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error("reference window has {got} points, need {need}")]
    ShortWindow { got: usize, need: usize },
    #[error("horizon solve failed: {0:?}")]
    SolverFailure(SolveStatus),
    #[error("tracking log is empty")]
    EmptyLog,
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        let bad = |m: &str| Err(TrackError::InvalidConfig(m.into()));
        if self.horizon_steps < 2 {
            return bad("horizon must have at least 2 steps");
        }
        if !(self.control_rate > 0.0) || self.plant_substeps == 0 || !(self.settle_time >= 0.0) {
            return bad("rates and substeps must be positive");
        }
        let weights = self.q.iter().chain(&self.r).chain(&self.p).chain([&self.terminal_multiplier]);
        if weights.into_iter().any(|w| !(*w >= 0.0)) {
            return bad("weights must be non-negative");
        }
        if self.max_control_change.iter().any(|d| !(*d > 0.0)) {
            return bad("control change limits must be positive");
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }
}

/// A reference sample: state plus the feed-forward control held from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub state: VehicleState,
    pub control: ControlInput,
}

/// One horizon problem: variables `[e_k (5), u_k (2)]` for `k < N`, then
/// `e_N`, with `e = x - x_ref` (heading wrapped).
struct HorizonQp {
    steps: usize,
    q: [f64; 5],
    qe: [f64; 5],
    r: [f64; 2],
    p: [f64; 2],
    e0: [f64; 5],
    u_ref: Vec<[f64; 2]>,
    prev_u: [f64; 2],
    /// Per step: state Jacobian and affine offset of the linearized step.
    a: Vec<[[f64; 5]; 5]>,
    offset: Vec<[f64; 5]>,
    dt: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    du: [f64; 2],
    warm: Vec<f64>,
}

impl HorizonQp {
    fn e(&self, k: usize) -> usize {
        7 * k
    }

    fn u(&self, k: usize) -> usize {
        7 * k + 5
    }

    fn dyn_row(&self, k: usize) -> usize {
        5 + 5 * k
    }

    fn du_row(&self, k: usize) -> usize {
        5 + 5 * self.steps + 2 * k
    }

    fn jacobian_walk(&self, emit: &mut dyn FnMut(usize, usize, f64)) {
        for j in 0..5 {
            emit(j, self.e(0) + j, 1.0);
        }
        for k in 0..self.steps {
            let r = self.dyn_row(k);
            for i in 0..5 {
                emit(r + i, self.e(k + 1) + i, 1.0);
                for j in 0..5 {
                    if self.a[k][i][j] != 0.0 {
                        emit(r + i, self.e(k) + j, -self.a[k][i][j]);
                    }
                }
            }
            emit(r + 3, self.u(k), -self.dt);
            emit(r + 4, self.u(k) + 1, -self.dt);
            let d = self.du_row(k);
            for j in 0..2 {
                emit(d + j, self.u(k) + j, 1.0);
                if k > 0 {
                    emit(d + j, self.u(k - 1) + j, -1.0);
                }
            }
        }
    }

    fn hessian_walk(&self, emit: &mut dyn FnMut(usize, usize, f64)) {
        for k in 0..=self.steps {
            let w = if k == self.steps { &self.qe } else { &self.q };
            for j in 0..5 {
                emit(self.e(k) + j, self.e(k) + j, 2.0 * w[j]);
            }
            if k == self.steps {
                break;
            }
            for j in 0..2 {
                let mut d = 2.0 * (self.r[j] + self.p[j]);
                if k + 1 < self.steps {
                    d += 2.0 * self.p[j];
                }
                emit(self.u(k) + j, self.u(k) + j, d);
                if k > 0 {
                    emit(self.u(k) + j, self.u(k - 1) + j, -2.0 * self.p[j]);
                }
            }
        }
    }
}

impl NlpProblem for HorizonQp {
    fn num_variables(&self) -> usize {
        7 * self.steps + 5
    }

    fn num_constraints(&self) -> usize {
        5 + 7 * self.steps
    }

    fn variable_bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        lower.copy_from_slice(&self.lower);
        upper.copy_from_slice(&self.upper);
    }

    fn constraint_bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        lower[..5].copy_from_slice(&self.e0);
        upper[..5].copy_from_slice(&self.e0);
        for k in 0..self.steps {
            let r = self.dyn_row(k);
            lower[r..r + 5].copy_from_slice(&self.offset[k]);
            upper[r..r + 5].copy_from_slice(&self.offset[k]);
            let d = self.du_row(k);
            for j in 0..2 {
                let base = if k == 0 { self.prev_u[j] } else { 0.0 };
                lower[d + j] = base - self.du[j];
                upper[d + j] = base + self.du[j];
            }
        }
    }

    fn initial_point(&self, x: &mut [f64]) {
        x.copy_from_slice(&self.warm);
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let mut f = 0.0;
        for k in 0..=self.steps {
            let w = if k == self.steps { &self.qe } else { &self.q };
            for j in 0..5 {
                f += w[j] * x[self.e(k) + j].powi(2);
            }
            if k == self.steps {
                break;
            }
            for j in 0..2 {
                let u = x[self.u(k) + j];
                let prev = if k == 0 { self.prev_u[j] } else { x[self.u(k - 1) + j] };
                f += self.r[j] * (u - self.u_ref[k][j]).powi(2) + self.p[j] * (u - prev).powi(2);
            }
        }
        f
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        for k in 0..=self.steps {
            let w = if k == self.steps { &self.qe } else { &self.q };
            for j in 0..5 {
                grad[self.e(k) + j] += 2.0 * w[j] * x[self.e(k) + j];
            }
            if k == self.steps {
                break;
            }
            for j in 0..2 {
                let i = self.u(k) + j;
                grad[i] += 2.0 * self.r[j] * (x[i] - self.u_ref[k][j]);
                let prev = if k == 0 { self.prev_u[j] } else { x[self.u(k - 1) + j] };
                let d = 2.0 * self.p[j] * (x[i] - prev);
                grad[i] += d;
                if k > 0 {
                    grad[self.u(k - 1) + j] -= d;
                }
            }
        }
    }

    fn constraints(&self, x: &[f64], g: &mut [f64]) {
        g.fill(0.0);
        self.jacobian_walk(&mut |r, c, v| g[r] += v * x[c]);
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        self.jacobian_walk(&mut |r, c, _| out.push((r, c)));
        out
    }

    fn jacobian_values(&self, _x: &[f64], values: &mut [f64]) {
        let mut k = 0;
        self.jacobian_walk(&mut |_, _, v| {
            values[k] = v;
            k += 1;
        });
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        self.hessian_walk(&mut |r, c, _| out.push((r, c)));
        out
    }

    fn hessian_values(&self, _x: &[f64], obj_factor: f64, _lambda: &[f64], values: &mut [f64]) {
        let mut k = 0;
        self.hessian_walk(&mut |_, _, v| {
            values[k] = obj_factor * v;
            k += 1;
        });
    }
}

fn error_of(x: &VehicleState, reference: &VehicleState) -> [f64; 5] {
    let (a, b) = (x.to_array(), reference.to_array());
    [a[0] - b[0], a[1] - b[1], angle_diff(a[2], b[2]), a[3] - b[3], a[4] - b[4]]
}

/// Output of one horizon solve.
#[derive(Debug, Clone)]
pub struct NmpcSolution {
    pub control: ControlInput,
    pub controls: Vec<ControlInput>,
    /// Predicted states of the linearized model, `N + 1` of them.
    pub predicted: Vec<VehicleState>,
    /// Raw decision vector, usable as the next tick's warm start.
    pub raw: Vec<f64>,
    pub status: SolveStatus,
}

/// Solves one horizon problem from state `x` against `window[0..=N]`.
/// `prev_u` is the control applied on the previous tick; `warm` is a
/// decision vector from [`NmpcSolution::raw`], shifted by the caller.
pub fn nmpc_step(
    cfg: &TrackerConfig,
    model: &VehicleModel,
    x: &VehicleState,
    window: &[ReferencePoint],
    prev_u: &ControlInput,
    warm: Option<&[f64]>,
) -> Result<NmpcSolution, TrackError> {
    cfg.validate()?;
    let n = cfg.horizon_steps;
    if window.len() < n + 1 {
        return Err(TrackError::ShortWindow {
            got: window.len(),
            need: n + 1,
        });
    }
    let dt = cfg.dt();
    let l = model.wheelbase;
    let b = &model.bounds;
    let mut a = Vec::with_capacity(n);
    let mut offset = Vec::with_capacity(n);
    for k in 0..n {
        let s = window[k].state;
        let (sin, cos) = s.pose.theta.sin_cos();
        let tan = s.phi.tan();
        let mut jac = [[0.0; 5]; 5];
        for (i, row) in jac.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        jac[0][2] = -s.v * sin * dt;
        jac[0][3] = cos * dt;
        jac[1][2] = s.v * cos * dt;
        jac[1][3] = sin * dt;
        jac[2][3] = tan / l * dt;
        jac[2][4] = s.v * (1.0 + tan * tan) / l * dt;
        a.push(jac);
        // the step is affine in u, so e_{k+1} = A e_k + B u_k + F(x_ref, 0) - x_ref,k+1
        let free = euler(l, s.to_array(), [0.0, 0.0], dt);
        let next = window[k + 1].state.to_array();
        offset.push([
            free[0] - next[0],
            free[1] - next[1],
            angle_diff(free[2], next[2]),
            free[3] - next[3],
            free[4] - next[4],
        ]);
    }

    let nv = 7 * n + 5;
    let mut lower = vec![-INFINITY_BOUND; nv];
    let mut upper = vec![INFINITY_BOUND; nv];
    for k in 0..=n {
        let base = 7 * k;
        let r = window[k].state;
        if k > 0 {
            lower[base + 3] = b.v_min - r.v;
            upper[base + 3] = b.v_max - r.v;
            lower[base + 4] = -b.phi_max - r.phi;
            upper[base + 4] = b.phi_max - r.phi;
        }
        if k < n {
            lower[base + 5] = b.a_min;
            upper[base + 5] = b.a_max;
            lower[base + 6] = -b.steer_rate_max;
            upper[base + 6] = b.steer_rate_max;
        }
    }

    let e0 = error_of(x, &window[0].state);
    let warm = match warm {
        Some(w) if w.len() == nv => w.to_vec(),
        _ => {
            let mut w = vec![0.0; nv];
            w[..5].copy_from_slice(&e0);
            for k in 0..n {
                w[7 * k + 5] = window[k].control.accel.clamp(b.a_min, b.a_max);
                w[7 * k + 6] = window[k].control.steer_rate.clamp(-b.steer_rate_max, b.steer_rate_max);
            }
            w
        }
    };
    let qe = cfg.q.map(|w| w * cfg.terminal_multiplier);
    let u_ref = (0..n)
        .map(|k| match cfg.control_penalty {
            ControlPenalty::FromReference => [window[k].control.accel, window[k].control.steer_rate],
            ControlPenalty::Absolute => [0.0, 0.0],
        })
        .collect();
    let problem = HorizonQp {
        steps: n,
        q: cfg.q,
        qe,
        r: cfg.r,
        p: cfg.p,
        e0,
        u_ref,
        prev_u: [prev_u.accel, prev_u.steer_rate],
        a,
        offset,
        dt,
        lower,
        upper,
        du: cfg.max_control_change,
        warm,
    };
    let options = SolverOptions {
        tol: 1e-8,
        constr_viol_tol: 1e-9,
        acceptable_tol: 1e-6,
        acceptable_constr_viol_tol: 1e-8,
        max_iter: 200,
        mu_init: 1e-2,
        ..SolverOptions::default()
    };
    let sol = solve(&problem, &options);
    if !sol.status.converged() {
        return Err(TrackError::SolverFailure(sol.status));
    }
    let z = &sol.x;
    let controls: Vec<ControlInput> = (0..n)
        .map(|k| {
            ControlInput::new(
                z[7 * k + 5].clamp(b.a_min, b.a_max),
                z[7 * k + 6].clamp(-b.steer_rate_max, b.steer_rate_max),
            )
        })
        .collect();
    let predicted = (0..=n)
        .map(|k| {
            let r = window[k].state.to_array();
            let e = &z[7 * k..7 * k + 5];
            VehicleState::from_array([r[0] + e[0], r[1] + e[1], r[2] + e[2], r[3] + e[3], r[4] + e[4]])
        })
        .collect();
    let mut control = controls[0];
    // the rate box is hard: clamp away solver round-off
    let du = cfg.max_control_change;
    control.accel = control.accel.clamp(prev_u.accel - du[0], prev_u.accel + du[0]);
    control.steer_rate = control.steer_rate.clamp(prev_u.steer_rate - du[1], prev_u.steer_rate + du[1]);
    Ok(NmpcSolution {
        control,
        controls,
        predicted,
        raw: sol.x,
        status: sol.status,
    })
}

/// Reference sampled by time: states interpolated linearly between
/// trajectory samples (heading unwrapped), controls held.
pub struct TimedReference<'a> {
    traj: &'a Trajectory,
    thetas: Vec<f64>,
}

impl<'a> TimedReference<'a> {
    pub fn new(traj: &'a Trajectory) -> Self {
        let thetas = crate::vehicle::unwrap_headings(traj.states.iter().map(|s| s.pose.theta));
        Self { traj, thetas }
    }

    pub fn duration(&self) -> f64 {
        self.traj.duration()
    }

    pub fn at(&self, t: f64) -> ReferencePoint {
        let states = &self.traj.states;
        let last = states.len() - 1;
        let pos = (t / self.traj.dt).max(0.0);
        if pos >= last as f64 {
            let s = states[last];
            return ReferencePoint {
                state: VehicleState { pose: Pose2D::new(s.pose.x, s.pose.y, self.thetas[last]), ..s },
                control: ControlInput::new(0.0, 0.0),
            };
        }
        let i = pos.floor() as usize;
        let f = pos - i as f64;
        let (a, b) = (states[i].to_array(), states[i + 1].to_array());
        let lerp = |k: usize| a[k] + f * (b[k] - a[k]);
        let theta = self.thetas[i] + f * (self.thetas[i + 1] - self.thetas[i]);
        ReferencePoint {
            state: VehicleState::new(lerp(0), lerp(1), theta, lerp(3), lerp(4)),
            control: self.traj.controls[i],
        }
    }
}

/// Signed lateral offset (positive to the left of the reference heading)
/// and heading error against the reference polyline, searching segments
/// whose time lies within `window` seconds of `t`.
pub fn path_errors(traj: &Trajectory, p: &VehicleState, t: f64, window: f64) -> (f64, f64) {
    let states = &traj.states;
    if states.len() < 2 {
        let s = states[0];
        let d = p.pose.position() - s.pose.position();
        return (d.dot(Vec2::new(-s.pose.theta.sin(), s.pose.theta.cos())), angle_diff(p.pose.theta, s.pose.theta));
    }
    let dt = traj.dt;
    let centre = (t / dt).round() as i64;
    let span = (window / dt).ceil() as i64;
    let lo = (centre - span).clamp(0, states.len() as i64 - 2) as usize;
    let hi = (centre + span).clamp(0, states.len() as i64 - 2) as usize;
    let pos = p.pose.position();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in lo..=hi {
        let (a, b) = (&states[i], &states[i + 1]);
        let (pa, pb) = (a.pose.position(), b.pose.position());
        let e = pb - pa;
        let len2 = e.dot(e);
        let f = if len2 > 1e-18 { ((pos - pa).dot(e) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let foot = pa + e * f;
        let dist = pos.distance(foot);
        if dist < best.0 - 1e-12 {
            let theta = a.pose.theta + f * angle_diff(b.pose.theta, a.pose.theta);
            let left = Vec2::new(-theta.sin(), theta.cos());
            best = (dist, (pos - foot).dot(left), angle_diff(p.pose.theta, theta));
        }
    }
    (best.1, best.2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingTick {
    pub time: f64,
    pub state: VehicleState,
    pub reference: VehicleState,
    pub control: ControlInput,
    pub cross_track_error: f64,
    pub heading_error: f64,
    pub solver_failed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingLog {
    pub ticks: Vec<TrackingTick>,
    pub solver_failures: usize,
}

/// Deterministic disturbance: an initial pose offset plus a lateral drift.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Disturbance {
    pub initial_offset: [f64; 3],
    /// Metres per second pushed to the left of the heading.
    pub lateral_drift: f64,
}

/// Runs the controller against an Euler plant integrated `plant_substeps`
/// times per tick with the control held.
pub fn simulate_closed_loop(
    cfg: &TrackerConfig,
    model: &VehicleModel,
    traj: &Trajectory,
    disturbance: Option<&Disturbance>,
) -> Result<TrackingLog, TrackError> {
    cfg.validate()?;
    let mut log = TrackingLog::default();
    if traj.states.len() < 2 {
        return Ok(log);
    }
    let reference = TimedReference::new(traj);
    let dt = cfg.dt();
    let n = cfg.horizon_steps;
    let total = reference.duration() + cfg.settle_time;
    let ticks = (total / dt).round() as usize;

    let mut x = traj.states[0];
    if let Some(d) = disturbance {
        x.pose.x += d.initial_offset[0];
        x.pose.y += d.initial_offset[1];
        x.pose.theta += d.initial_offset[2];
    }
    let mut prev_u = ControlInput::new(0.0, 0.0);
    let mut warm: Option<Vec<f64>> = None;
    for tick in 0..ticks {
        let t = tick as f64 * dt;
        let window: Vec<ReferencePoint> = (0..=n).map(|k| reference.at(t + k as f64 * dt)).collect();
        let (control, failed) = match nmpc_step(cfg, model, &x, &window, &prev_u, warm.as_deref()) {
            Ok(sol) => {
                let mut next = sol.raw[7..].to_vec();
                next.extend_from_slice(&sol.raw[sol.raw.len() - 7..]);
                warm = Some(next);
                (sol.control, false)
            }
            Err(TrackError::SolverFailure(_)) => {
                warm = None;
                (ControlInput::new(0.0, 0.0), true)
            }
            Err(e) => return Err(e),
        };
        let (cross, heading) = path_errors(traj, &x, t, 1.0);
        log.ticks.push(TrackingTick {
            time: t,
            state: VehicleState { pose: Pose2D::new(x.pose.x, x.pose.y, normalize_angle(x.pose.theta)), ..x },
            reference: window[0].state,
            control,
            cross_track_error: cross,
            heading_error: heading,
            solver_failed: failed,
        });
        if failed {
            log.solver_failures += 1;
        }
        let h = dt / cfg.plant_substeps as f64;
        for _ in 0..cfg.plant_substeps {
            let mut s = euler(model.wheelbase, x.to_array(), [control.accel, control.steer_rate], h);
            if let Some(d) = disturbance {
                s[0] -= d.lateral_drift * h * s[2].sin();
                s[1] += d.lateral_drift * h * s[2].cos();
            }
            x = VehicleState::from_array(s);
        }
        prev_u = control;
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub max: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingStats {
    pub cross_track: ErrorStats,
    pub heading: ErrorStats,
    pub ticks: usize,
    pub solver_failures: usize,
}

/// Mean, max and nearest-rank 95th percentile of absolute values.
pub fn error_stats(values: &[f64]) -> Result<ErrorStats, TrackError> {
    if values.is_empty() {
        return Err(TrackError::EmptyLog);
    }
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    Ok(ErrorStats {
        mean: abs.iter().sum::<f64>() / n as f64,
        max: abs[n - 1],
        p95: abs[rank - 1],
    })
}

pub fn tracking_errors(log: &TrackingLog) -> Result<TrackingStats, TrackError> {
    let cross: Vec<f64> = log.ticks.iter().map(|t| t.cross_track_error).collect();
    let heading: Vec<f64> = log.ticks.iter().map(|t| t.heading_error).collect();
    Ok(TrackingStats {
        cross_track: error_stats(&cross)?,
        heading: error_stats(&heading)?,
        ticks: log.ticks.len(),
        solver_failures: log.solver_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{Direction, GeometricPath, PathSegment};
    use crate::vehicle::rollout;
    use nalgebra::{DMatrix, DVector};

    fn window_of(traj: &Trajectory, t0: f64, cfg: &TrackerConfig) -> Vec<ReferencePoint> {
        let r = TimedReference::new(traj);
        (0..=cfg.horizon_steps).map(|k| r.at(t0 + k as f64 * cfg.dt())).collect()
    }

    fn cruise(model: &VehicleModel, speed: f64, steps: usize) -> Trajectory {
        rollout(model, &VehicleState::new(0.0, 0.0, 0.0, speed, 0.0), &vec![ControlInput::default(); steps])
    }

    #[test]
    fn on_reference_stays_on_reference() {
        let m = VehicleModel::tractor();
        let cfg = TrackerConfig::default();
        let traj = cruise(&m, 1.0, 40);
        let w = window_of(&traj, 0.0, &cfg);
        let sol = nmpc_step(&cfg, &m, &traj.states[0], &w, &ControlInput::default(), None).unwrap();
        for (p, r) in sol.predicted.iter().zip(&w) {
            let e = error_of(p, &r.state);
            assert!(e.iter().all(|v| v.abs() <= 1e-3), "{e:?}");
        }
        assert!(sol.control.accel.abs() <= 1e-3 && sol.control.steer_rate.abs() <= 1e-3);
    }

    #[test]
    fn lateral_offset_steers_back() {
        let m = VehicleModel::tractor();
        let cfg = TrackerConfig::default();
        let traj = cruise(&m, 1.0, 40);
        let w = window_of(&traj, 0.0, &cfg);
        let left = VehicleState::new(0.0, 0.2, 0.0, 1.0, 0.0);
        let sol = nmpc_step(&cfg, &m, &left, &w, &ControlInput::default(), None).unwrap();
        assert!(sol.control.steer_rate < 0.0);
        let right = VehicleState::new(0.0, -0.2, 0.0, 1.0, 0.0);
        let sol = nmpc_step(&cfg, &m, &right, &w, &ControlInput::default(), None).unwrap();
        assert!(sol.control.steer_rate > 0.0);
    }

    /// Condensed unconstrained least squares over the controls, with the
    /// linearization taken by central differences of the Euler step.
    fn dense_oracle(
        cfg: &TrackerConfig,
        model: &VehicleModel,
        x: &VehicleState,
        w: &[ReferencePoint],
        prev: [f64; 2],
    ) -> Vec<f64> {
        let n = cfg.horizon_steps;
        let dt = cfg.dt();
        let l = model.wheelbase;
        let h = 1e-6;
        let step = |s: [f64; 5], u: [f64; 2]| euler(l, s, u, dt);
        // e_k = G_k u + c_k, u stacked as 2n
        let mut g = DMatrix::<f64>::zeros(5, 2 * n);
        let e0 = x.to_array();
        let r0 = w[0].state.to_array();
        let mut c = DVector::from_iterator(5, (0..5).map(|i| e0[i] - r0[i]));
        let mut gs = vec![g.clone()];
        let mut cs = vec![c.clone()];
        for k in 0..n {
            let s = w[k].state.to_array();
            let ur = [w[k].control.accel, w[k].control.steer_rate];
            let mut a = DMatrix::<f64>::zeros(5, 5);
            let mut b = DMatrix::<f64>::zeros(5, 2);
            for j in 0..5 {
                let (mut p, mut q) = (s, s);
                p[j] += h;
                q[j] -= h;
                let (fp, fq) = (step(p, ur), step(q, ur));
                for i in 0..5 {
                    a[(i, j)] = (fp[i] - fq[i]) / (2.0 * h);
                }
            }
            for j in 0..2 {
                let (mut p, mut q) = (ur, ur);
                p[j] += h;
                q[j] -= h;
                let (fp, fq) = (step(s, p), step(s, q));
                for i in 0..5 {
                    b[(i, j)] = (fp[i] - fq[i]) / (2.0 * h);
                }
            }
            let f = step(s, ur);
            let next = w[k + 1].state.to_array();
            let mut off = DVector::from_iterator(5, (0..5).map(|i| f[i] - next[i]));
            off -= &b * DVector::from_column_slice(&ur);
            let mut gn = &a * &g;
            let mut block = gn.view_mut((0, 2 * k), (5, 2));
            block += &b;
            c = &a * &c + off;
            g = gn;
            gs.push(g.clone());
            cs.push(c.clone());
        }
        let mut hess = DMatrix::<f64>::zeros(2 * n, 2 * n);
        let mut lin = DVector::<f64>::zeros(2 * n);
        for k in 0..=n {
            let scale = if k == n { cfg.terminal_multiplier } else { 1.0 };
            let wq = DMatrix::from_diagonal(&DVector::from_iterator(5, cfg.q.iter().map(|v| v * scale)));
            hess += gs[k].transpose() * &wq * &gs[k];
            lin += gs[k].transpose() * &wq * &cs[k];
        }
        for k in 0..n {
            for j in 0..2 {
                let i = 2 * k + j;
                let ur = [w[k].control.accel, w[k].control.steer_rate][j];
                hess[(i, i)] += cfg.r[j];
                lin[i] -= cfg.r[j] * ur;
                // Δu_k = u_k - u_{k-1}
                hess[(i, i)] += cfg.p[j];
                if k == 0 {
                    lin[i] -= cfg.p[j] * prev[j];
                } else {
                    hess[(i - 2, i - 2)] += cfg.p[j];
                    hess[(i, i - 2)] -= cfg.p[j];
                    hess[(i - 2, i)] -= cfg.p[j];
                }
            }
        }
        let sol = hess.cholesky().expect("positive definite").solve(&(-lin));
        sol.iter().copied().collect()
    }

    #[test]
    fn unconstrained_tick_matches_dense_least_squares() {
        let m = VehicleModel::tractor();
        let cfg = TrackerConfig {
            horizon_steps: 20,
            max_control_change: [10.0, 10.0],
            ..TrackerConfig::default()
        };
        let controls: Vec<ControlInput> =
            (0..30).map(|k| ControlInput::new(0.05 * (k as f64 * 0.3).sin(), 0.08 * (k as f64 * 0.2).cos())).collect();
        let traj = rollout(&m, &VehicleState::new(1.0, 2.0, 0.3, 0.8, 0.05), &controls);
        let w = window_of(&traj, 0.37, &cfg);
        let x = VehicleState::new(w[0].state.pose.x + 0.03, w[0].state.pose.y - 0.02, w[0].state.pose.theta + 0.01, 0.82, 0.06);
        let prev = ControlInput::new(0.01, -0.02);
        let sol = nmpc_step(&cfg, &m, &x, &w, &prev, None).unwrap();
        let oracle = dense_oracle(&cfg, &m, &x, &w, [prev.accel, prev.steer_rate]);
        for (k, u) in sol.controls.iter().enumerate() {
            assert!((u.accel - oracle[2 * k]).abs() <= 1e-6, "a at {k}: {} vs {}", u.accel, oracle[2 * k]);
            assert!((u.steer_rate - oracle[2 * k + 1]).abs() <= 1e-6, "dphi at {k}");
        }
    }

    #[test]
    fn short_window_rejected() {
        let m = VehicleModel::tractor();
        let cfg = TrackerConfig::default();
        let traj = cruise(&m, 1.0, 5);
        let w = window_of(&traj, 0.0, &cfg);
        let err = nmpc_step(&cfg, &m, &traj.states[0], &w[..10], &ControlInput::default(), None).unwrap_err();
        assert_eq!(err, TrackError::ShortWindow { got: 10, need: 61 });
    }

    #[test]
    fn config_validation() {
        let bad = TrackerConfig { horizon_steps: 1, ..TrackerConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrackerConfig { q: [1.0, -1.0, 0.0, 0.0, 0.0], ..TrackerConfig::default() };
        assert!(bad.validate().is_err());
        assert!(TrackerConfig::default().validate().is_ok());
    }

    #[test]
    fn straight_reference_ends_within_two_centimetres() {
        let m = VehicleModel::tractor();
        let line = GeometricPath::from_segments(Pose2D::default(), vec![PathSegment::line(10.0, Direction::Forward)], 0.1);
        let traj = crate::optimizer::coarse_to_trajectory_with_speed(&line, &m, Some(1.0));
        assert!((traj.states.last().unwrap().pose.x - 10.0).abs() < 1e-9);
        let log = simulate_closed_loop(&TrackerConfig::default(), &m, &traj, None).unwrap();
        let end = log.ticks.last().unwrap().state.pose.position();
        assert!(end.distance(Vec2::new(10.0, 0.0)) <= 0.02, "{:?}", log.ticks.last());
        let stats = tracking_errors(&log).unwrap();
        assert!(stats.cross_track.max <= 1e-3 && stats.heading.max <= 1e-3);
    }

    #[test]
    fn applied_controls_respect_boxes() {
        let m = VehicleModel::tractor();
        let cfg = TrackerConfig::default();
        let controls: Vec<ControlInput> = (0..60)
            .map(|k| ControlInput::new(0.6 * (k as f64 * 0.4).sin(), 0.7 * (k as f64 * 0.25).cos()))
            .collect();
        let traj = rollout(&m, &VehicleState::new(0.0, 0.0, 0.0, 0.5, 0.0), &controls);
        let dist = Disturbance { initial_offset: [0.3, -0.2, 0.1], lateral_drift: 0.05 };
        let log = simulate_closed_loop(&cfg, &m, &traj, Some(&dist)).unwrap();
        let b = &m.bounds;
        let mut prev = ControlInput::default();
        for t in &log.ticks {
            let u = t.control;
            assert!(u.accel >= b.a_min - 1e-12 && u.accel <= b.a_max + 1e-12);
            assert!(u.steer_rate.abs() <= b.steer_rate_max + 1e-12);
            assert!((u.accel - prev.accel).abs() <= cfg.max_control_change[0] + 1e-12);
            assert!((u.steer_rate - prev.steer_rate).abs() <= cfg.max_control_change[1] + 1e-12);
            prev = u;
        }
        let spacing = log.ticks.windows(2).map(|w| w[1].time - w[0].time);
        assert!(spacing.into_iter().all(|d| (d - cfg.dt()).abs() < 1e-12));
    }

    #[test]
    fn zero_length_reference_gives_empty_log() {
        let m = VehicleModel::tractor();
        let traj = rollout(&m, &VehicleState::default(), &[]);
        let log = simulate_closed_loop(&TrackerConfig::default(), &m, &traj, None).unwrap();
        assert!(log.ticks.is_empty());
        assert_eq!(tracking_errors(&log).unwrap_err(), TrackError::EmptyLog);
    }

    #[test]
    fn constant_error_statistics() {
        let s = error_stats(&[0.1; 7]).unwrap();
        assert!((s.mean - 0.1).abs() < 1e-15 && s.max == 0.1 && s.p95 == 0.1);
    }

    #[test]
    fn nearest_rank_percentile() {
        let mut v = vec![0.1; 19];
        v.push(-1.0);
        let s = error_stats(&v).unwrap();
        assert_eq!(s.max, 1.0);
        assert_eq!(s.p95, 0.1);
        assert!((s.mean - (1.9 + 1.0) / 20.0).abs() < 1e-12);
    }

    #[test]
    fn cross_track_sign_is_left_positive() {
        let m = VehicleModel::tractor();
        let traj = cruise(&m, 1.0, 10);
        let (d, h) = path_errors(&traj, &VehicleState::new(0.7, 0.25, 0.1, 1.0, 0.0), 0.7, 1.0);
        assert!((d - 0.25).abs() < 1e-12 && (h - 0.1).abs() < 1e-12);
        let (d, _) = path_errors(&traj, &VehicleState::new(0.7, -0.25, 0.0, 1.0, 0.0), 0.7, 1.0);
        assert!((d + 0.25).abs() < 1e-12);
    }
}
