//! Primal-dual interior point method with a filter line search.
//!
//! The algorithm is the usual barrier scheme: inequality constraints get
//! slack variables, bounds are handled by logarithmic barriers, the
//! primal-dual Newton system is solved with a sparse LDLᵀ factorization
//! and corrected for inertia, and steps are globalized by a filter on
//! (constraint violation, barrier objective) with second-order corrections.

use std::time::{Duration, Instant};

use crate::ldl::{Factorization, LdlFactor, SymmetricMatrix};
use crate::problem::{NlpProblem, INFINITY_BOUND};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Scaled KKT tolerance for convergence.
    pub tol: f64,
    /// Unscaled constraint violation required at convergence.
    pub constr_viol_tol: f64,
    pub acceptable_tol: f64,
    pub acceptable_constr_viol_tol: f64,
    /// Consecutive "acceptable" iterates needed to stop early.
    pub acceptable_iter: usize,
    pub max_iter: usize,
    pub max_time: Option<Duration>,
    pub mu_init: f64,
    pub bound_push: f64,
    pub bound_frac: f64,
    /// Warm start for the constraint multipliers. When absent a
    /// least-squares estimate is used.
    pub initial_multipliers: Option<Vec<f64>>,
    /// Record one log line per iteration.
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            constr_viol_tol: 1e-8,
            acceptable_tol: 1e-6,
            acceptable_constr_viol_tol: 1e-6,
            acceptable_iter: 15,
            max_iter: 3000,
            max_time: None,
            mu_init: 0.1,
            bound_push: 1e-2,
            bound_frac: 1e-2,
            initial_multipliers: None,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Stopped after several iterates met the acceptable tolerances.
    Acceptable,
    MaxIterations,
    TimeLimit,
    /// Feasibility restoration could not reduce the constraint violation.
    RestorationFailed,
    NumericalFailure,
}

impl SolveStatus {
    pub fn converged(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Acceptable)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Multipliers of `g`, sign convention `L = f + λᵀ g`.
    pub constraint_multipliers: Vec<f64>,
    pub bound_multipliers_lower: Vec<f64>,
    pub bound_multipliers_upper: Vec<f64>,
    pub objective: f64,
    /// Scaled KKT error of the returned iterate.
    pub kkt_error: f64,
    /// Largest absolute violation of `g_L <= g(x) <= g_U`.
    pub constraint_violation: f64,
    pub iterations: usize,
    pub log: Vec<String>,
}

const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const TAU_MIN: f64 = 0.99;
const KAPPA_SIGMA: f64 = 1e10;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const DELTA: f64 = 1.0;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const ETA_PHI: f64 = 1e-4;
const GAMMA_ALPHA: f64 = 0.05;
const MAX_SOC: usize = 4;
const KAPPA_SOC: f64 = 0.99;
const S_MAX: f64 = 100.0;
const DELTA_C: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-15;

struct Evaluation {
    objective: f64,
    /// Residual of the internal equality system (one entry per constraint).
    residual: Vec<f64>,
}

/// Solves `problem` from its initial point.
pub fn solve<P: NlpProblem + ?Sized>(problem: &P, options: &SolverOptions) -> Solution {
    let mut x0 = vec![0.0; problem.num_variables()];
    problem.initial_point(&mut x0);
    Solver::new(problem, options).run(x0)
}

struct Solver<'a, P: ?Sized> {
    problem: &'a P,
    options: &'a SolverOptions,
    nx: usize,
    n: usize,
    m: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    has_lower: Vec<bool>,
    has_upper: Vec<bool>,
    /// Equality target for equality rows, `None` for inequality rows.
    eq_target: Vec<Option<f64>>,
    /// Slack variable index (into the full primal vector) for inequality rows.
    slack_of_row: Vec<Option<usize>>,
    row_of_slack: Vec<usize>,
    jac_structure: Vec<(usize, usize)>,
    hess_len: usize,
    kkt: SymmetricMatrix,
    ldl: LdlFactor,
    delta_w_last: f64,
    started: Instant,
    log: Vec<String>,
}

impl<'a, P: NlpProblem + ?Sized> Solver<'a, P> {
    fn new(problem: &'a P, options: &'a SolverOptions) -> Self {
        let nx = problem.num_variables();
        let m = problem.num_constraints();
        let mut xl = vec![0.0; nx];
        let mut xu = vec![0.0; nx];
        problem.variable_bounds(&mut xl, &mut xu);
        let mut gl = vec![0.0; m];
        let mut gu = vec![0.0; m];
        problem.constraint_bounds(&mut gl, &mut gu);

        let mut eq_target = Vec::with_capacity(m);
        let mut slack_of_row = Vec::with_capacity(m);
        let mut row_of_slack = Vec::new();
        let mut lower = xl;
        let mut upper = xu;
        for j in 0..m {
            if gl[j] == gu[j] {
                eq_target.push(Some(gl[j]));
                slack_of_row.push(None);
            } else {
                eq_target.push(None);
                slack_of_row.push(Some(nx + row_of_slack.len()));
                row_of_slack.push(j);
                lower.push(gl[j]);
                upper.push(gu[j]);
            }
        }
        let n = lower.len();
        let has_lower: Vec<bool> = lower.iter().map(|&l| l > -INFINITY_BOUND).collect();
        let has_upper: Vec<bool> = upper.iter().map(|&u| u < INFINITY_BOUND).collect();

        let hess_structure = problem.hessian_structure();
        let jac_structure = problem.jacobian_structure();
        let mut entries: Vec<(usize, usize)> =
            Vec::with_capacity(hess_structure.len() + jac_structure.len() + row_of_slack.len());
        entries.extend(hess_structure.iter().copied());
        entries.extend(jac_structure.iter().map(|&(r, c)| (n + r, c)));
        entries.extend(
            row_of_slack
                .iter()
                .enumerate()
                .map(|(s, &row)| (n + row, nx + s)),
        );
        let kkt = SymmetricMatrix::new(n + m, &entries);
        let ldl = LdlFactor::analyze(&kkt);

        Self {
            problem,
            options,
            nx,
            n,
            m,
            lower,
            upper,
            has_lower,
            has_upper,
            eq_target,
            slack_of_row,
            row_of_slack,
            hess_len: hess_structure.len(),
            jac_structure,
            kkt,
            ldl,
            delta_w_last: 0.0,
            started: Instant::now(),
            log: Vec::new(),
        }
    }

    fn evaluate(&self, z: &[f64]) -> Evaluation {
        let x = &z[..self.nx];
        let objective = self.problem.objective(x);
        let mut g = vec![0.0; self.m];
        self.problem.constraints(x, &mut g);
        let residual = (0..self.m)
            .map(|j| match (self.eq_target[j], self.slack_of_row[j]) {
                (Some(t), _) => g[j] - t,
                (None, Some(s)) => g[j] - z[s],
                (None, None) => unreachable!(),
            })
            .collect();
        Evaluation {
            objective,
            residual,
        }
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.n];
        self.problem.gradient(&z[..self.nx], &mut grad[..self.nx]);
        grad
    }

    fn jacobian(&self, z: &[f64]) -> Vec<f64> {
        let mut vals = vec![0.0; self.jac_structure.len()];
        self.problem.jacobian_values(&z[..self.nx], &mut vals);
        vals
    }

    /// out += J̃ᵀ y
    fn jt_mul(&self, jac: &[f64], y: &[f64], out: &mut [f64]) {
        for (k, &(r, c)) in self.jac_structure.iter().enumerate() {
            out[c] += jac[k] * y[r];
        }
        for (s, &row) in self.row_of_slack.iter().enumerate() {
            out[self.nx + s] -= y[row];
        }
    }

    fn barrier_value(&self, objective: f64, z: &[f64], mu: f64) -> f64 {
        let mut phi = objective;
        for i in 0..self.n {
            if self.has_lower[i] {
                phi -= mu * (z[i] - self.lower[i]).ln();
            }
            if self.has_upper[i] {
                phi -= mu * (self.upper[i] - z[i]).ln();
            }
        }
        phi
    }

    fn barrier_gradient(&self, grad: &[f64], z: &[f64], mu: f64) -> Vec<f64> {
        let mut g = grad.to_vec();
        for i in 0..self.n {
            if self.has_lower[i] {
                g[i] -= mu / (z[i] - self.lower[i]);
            }
            if self.has_upper[i] {
                g[i] += mu / (self.upper[i] - z[i]);
            }
        }
        g
    }

    fn push_into_bounds(&self, z: &mut [f64]) {
        let k1 = self.options.bound_push;
        let k2 = self.options.bound_frac;
        for i in 0..self.n {
            let (l, u) = (self.lower[i], self.upper[i]);
            match (self.has_lower[i], self.has_upper[i]) {
                (true, true) => {
                    let pl = (k1 * l.abs().max(1.0)).min(k2 * (u - l));
                    let pu = (k1 * u.abs().max(1.0)).min(k2 * (u - l));
                    z[i] = z[i].max(l + pl).min(u - pu);
                }
                (true, false) => z[i] = z[i].max(l + k1 * l.abs().max(1.0)),
                (false, true) => z[i] = z[i].min(u - k1 * u.abs().max(1.0)),
                (false, false) => {}
            }
        }
    }


    fn fill_kkt(&mut self, hess: &[f64], jac: &[f64], diag: &[f64], delta_w: f64, delta_c: f64) {
        self.kkt.clear();
        for (k, &v) in hess.iter().enumerate() {
            self.kkt.add_slot(k, v);
        }
        let jac_offset = self.hess_len;
        for (k, &v) in jac.iter().enumerate() {
            self.kkt.add_slot(jac_offset + k, v);
        }
        let slack_offset = jac_offset + jac.len();
        for s in 0..self.row_of_slack.len() {
            self.kkt.add_slot(slack_offset + s, -1.0);
        }
        for i in 0..self.n {
            self.kkt.add_diagonal(i, diag[i] + delta_w);
        }
        for j in 0..self.m {
            self.kkt.add_diagonal(self.n + j, -delta_c);
        }
    }

    /// Factors the KKT matrix, raising the primal regularization until the
    /// inertia is (n, m, 0). Returns `false` if no regularization works.
    fn factor_kkt(&mut self, hess: &[f64], jac: &[f64], diag: &[f64]) -> bool {
        let mut delta_w = 0.0;
        let mut delta_c = DELTA_C;
        let mut first_correction = true;
        loop {
            self.fill_kkt(hess, jac, diag, delta_w, delta_c);
            let result = self.ldl.factor(&self.kkt, PIVOT_TOL);
            match result {
                Factorization::Ok { positive, .. } if positive == self.n => {
                    if delta_w > 0.0 {
                        self.delta_w_last = delta_w;
                    }
                    return true;
                }
                Factorization::Ok { positive, .. } if positive < self.n => {}
                _ => delta_c = (delta_c * 100.0).min(1e-4),
            }
            delta_w = if first_correction {
                first_correction = false;
                if self.delta_w_last == 0.0 {
                    1e-4
                } else {
                    (self.delta_w_last / 3.0).max(1e-20)
                }
            } else if self.delta_w_last == 0.0 {
                delta_w * 100.0
            } else {
                delta_w * 8.0
            };
            if delta_w > 1e40 {
                return false;
            }
        }
    }

    /// Solves the factored system with one step of iterative refinement.
    fn solve_kkt(&self, rhs: &[f64]) -> Vec<f64> {
        let mut sol = rhs.to_vec();
        self.ldl.solve(&self.kkt, &mut sol);
        let mut residual = rhs.to_vec();
        let mut prod = vec![0.0; rhs.len()];
        self.kkt.mul_add(&sol, &mut prod);
        for (r, p) in residual.iter_mut().zip(&prod) {
            *r -= p;
        }
        self.ldl.solve(&self.kkt, &mut residual);
        for (s, r) in sol.iter_mut().zip(&residual) {
            *s += r;
        }
        sol
    }

    fn least_squares_multipliers(&mut self, grad: &[f64], jac: &[f64], zl: &[f64], zu: &[f64]) -> Vec<f64> {
        let hess = vec![0.0; self.hess_len];
        let ones = vec![1.0; self.n];
        self.fill_kkt(&hess, jac, &ones, 0.0, DELTA_C);
        if !matches!(
            self.ldl.factor(&self.kkt, PIVOT_TOL),
            Factorization::Ok { .. }
        ) {
            return vec![0.0; self.m];
        }
        let mut rhs = vec![0.0; self.n + self.m];
        for i in 0..self.n {
            rhs[i] = -(grad[i] - zl[i] + zu[i]);
        }
        let sol = self.solve_kkt(&rhs);
        let y = sol[self.n..].to_vec();
        if y.iter().any(|v| !v.is_finite() || v.abs() > 1e3) {
            vec![0.0; self.m]
        } else {
            y
        }
    }

    fn constraint_violation(&self, z: &[f64], residual: &[f64]) -> f64 {
        let mut viol: f64 = 0.0;
        for j in 0..self.m {
            match self.slack_of_row[j] {
                None => viol = viol.max(residual[j].abs()),
                Some(s) => {
                    let g = residual[j] + z[s];
                    viol = viol.max(self.lower[s] - g).max(g - self.upper[s]);
                }
            }
        }
        viol
    }

    #[allow(clippy::too_many_arguments)]
    fn optimality_error(
        &self,
        z: &[f64],
        grad: &[f64],
        jac: &[f64],
        y: &[f64],
        zl: &[f64],
        zu: &[f64],
        residual: &[f64],
        mu: f64,
    ) -> f64 {
        let mut dual = grad.to_vec();
        self.jt_mul(jac, y, &mut dual);
        for i in 0..self.n {
            dual[i] += zu[i] - zl[i];
        }
        let n_bounds =
            self.has_lower.iter().filter(|&&b| b).count() + self.has_upper.iter().filter(|&&b| b).count();
        let norm_y: f64 = y.iter().map(|v| v.abs()).sum();
        let norm_z: f64 = zl.iter().chain(zu.iter()).map(|v| v.abs()).sum();
        let s_d = (S_MAX.max((norm_y + norm_z) / ((self.m + n_bounds).max(1) as f64))) / S_MAX;
        let s_c = (S_MAX.max(norm_z / (n_bounds.max(1) as f64))) / S_MAX;
        let mut compl: f64 = 0.0;
        for i in 0..self.n {
            if self.has_lower[i] {
                compl = compl.max((zl[i] * (z[i] - self.lower[i]) - mu).abs());
            }
            if self.has_upper[i] {
                compl = compl.max((zu[i] * (self.upper[i] - z[i]) - mu).abs());
            }
        }
        let dual_inf = dual.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let primal_inf = residual.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        (dual_inf / s_d).max(primal_inf).max(compl / s_c)
    }

    fn fraction_to_boundary(&self, z: &[f64], dz: &[f64], tau: f64) -> f64 {
        let mut alpha: f64 = 1.0;
        for i in 0..self.n {
            if self.has_lower[i] && dz[i] < 0.0 {
                alpha = alpha.min(-tau * (z[i] - self.lower[i]) / dz[i]);
            }
            if self.has_upper[i] && dz[i] > 0.0 {
                alpha = alpha.min(tau * (self.upper[i] - z[i]) / dz[i]);
            }
        }
        alpha
    }

    fn multiplier_steps(&self, z: &[f64], dz: &[f64], zl: &[f64], zu: &[f64], mu: f64) -> (Vec<f64>, Vec<f64>) {
        let mut dzl = vec![0.0; self.n];
        let mut dzu = vec![0.0; self.n];
        for i in 0..self.n {
            if self.has_lower[i] {
                let s = z[i] - self.lower[i];
                dzl[i] = mu / s - zl[i] - zl[i] / s * dz[i];
            }
            if self.has_upper[i] {
                let s = self.upper[i] - z[i];
                dzu[i] = mu / s - zu[i] + zu[i] / s * dz[i];
            }
        }
        (dzl, dzu)
    }

    fn multiplier_fraction(&self, zl: &[f64], zu: &[f64], dzl: &[f64], dzu: &[f64], tau: f64) -> f64 {
        let mut alpha: f64 = 1.0;
        for i in 0..self.n {
            if self.has_lower[i] && dzl[i] < 0.0 {
                alpha = alpha.min(-tau * zl[i] / dzl[i]);
            }
            if self.has_upper[i] && dzu[i] < 0.0 {
                alpha = alpha.min(-tau * zu[i] / dzu[i]);
            }
        }
        alpha
    }

    fn safeguard_multipliers(&self, z: &[f64], zl: &mut [f64], zu: &mut [f64], mu: f64) {
        for i in 0..self.n {
            if self.has_lower[i] {
                let s = z[i] - self.lower[i];
                zl[i] = zl[i].clamp(mu / (KAPPA_SIGMA * s), KAPPA_SIGMA * mu / s);
            }
            if self.has_upper[i] {
                let s = self.upper[i] - z[i];
                zu[i] = zu[i].clamp(mu / (KAPPA_SIGMA * s), KAPPA_SIGMA * mu / s);
            }
        }
    }

    fn timed_out(&self) -> bool {
        self.options
            .max_time
            .is_some_and(|limit| self.started.elapsed() > limit)
    }

    fn run(mut self, x0: Vec<f64>) -> Solution {
        let (n, m, nx) = (self.n, self.m, self.nx);
        let mut z = x0;
        z.resize(n, 0.0);
        {
            let mut g = vec![0.0; m];
            self.problem.constraints(&z[..nx], &mut g);
            for (s, &row) in self.row_of_slack.iter().enumerate() {
                z[nx + s] = g[row];
            }
        }
        self.push_into_bounds(&mut z);

        let mut zl: Vec<f64> = self.has_lower.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let mut zu: Vec<f64> = self.has_upper.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let mut mu = self.options.mu_init;

        let mut ev = self.evaluate(&z);
        let mut grad = self.gradient(&z);
        let mut jac = self.jacobian(&z);
        let mut y = match &self.options.initial_multipliers {
            Some(init) if init.len() == m => init.clone(),
            _ => self.least_squares_multipliers(&grad, &jac, &zl, &zu),
        };

        let theta0 = l1(&ev.residual);
        let theta_max = 1e4 * theta0.max(1.0);
        let theta_min = 1e-4 * theta0.max(1.0);
        let mut filter: Vec<(f64, f64)> = Vec::new();
        let mut acceptable_count = 0usize;
        let mut force_mu_decrease = false;
        let status;
        let mut iterations = 0usize;

        loop {
            let e0 = self.optimality_error(&z, &grad, &jac, &y, &zl, &zu, &ev.residual, 0.0);
            let viol = self.constraint_violation(&z, &ev.residual);
            if self.options.verbose {
                self.log.push(format!(
                    "iter {iterations:4} obj {:+.8e} inf_pr {:.2e} kkt {:.2e} mu {:.1e} dw {:.1e}",
                    ev.objective, viol, e0, mu, self.delta_w_last
                ));
            }
            if !ev.objective.is_finite() || e0.is_nan() {
                status = SolveStatus::NumericalFailure;
                break;
            }
            if e0 <= self.options.tol && viol <= self.options.constr_viol_tol {
                status = SolveStatus::Optimal;
                break;
            }
            if e0 <= self.options.acceptable_tol && viol <= self.options.acceptable_constr_viol_tol {
                acceptable_count += 1;
                if acceptable_count >= self.options.acceptable_iter {
                    status = SolveStatus::Acceptable;
                    break;
                }
            } else {
                acceptable_count = 0;
            }
            if iterations >= self.options.max_iter {
                status = SolveStatus::MaxIterations;
                break;
            }
            if self.timed_out() {
                status = SolveStatus::TimeLimit;
                break;
            }

            // barrier parameter update (monotone)
            let mu_floor = self.options.tol / 10.0;
            loop {
                let e_mu = self.optimality_error(&z, &grad, &jac, &y, &zl, &zu, &ev.residual, mu);
                if (e_mu <= KAPPA_EPS * mu || force_mu_decrease) && mu > mu_floor {
                    mu = mu_floor.max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
                    filter.clear();
                    force_mu_decrease = false;
                } else {
                    break;
                }
            }
            let tau = TAU_MIN.max(1.0 - mu);

            // Newton system
            let mut hess = vec![0.0; self.hess_len];
            self.problem.hessian_values(&z[..nx], 1.0, &y, &mut hess);
            let mut sigma = vec![0.0; n];
            for i in 0..n {
                if self.has_lower[i] {
                    sigma[i] += zl[i] / (z[i] - self.lower[i]);
                }
                if self.has_upper[i] {
                    sigma[i] += zu[i] / (self.upper[i] - z[i]);
                }
            }
            if !self.factor_kkt(&hess, &jac, &sigma) {
                status = SolveStatus::NumericalFailure;
                break;
            }
            let grad_phi = self.barrier_gradient(&grad, &z, mu);
            let mut rhs = vec![0.0; n + m];
            {
                let mut rd = grad_phi.clone();
                self.jt_mul(&jac, &y, &mut rd);
                for i in 0..n {
                    rhs[i] = -rd[i];
                }
                for j in 0..m {
                    rhs[n + j] = -ev.residual[j];
                }
            }
            let sol = self.solve_kkt(&rhs);
            if sol.iter().any(|v| !v.is_finite()) {
                status = SolveStatus::NumericalFailure;
                break;
            }
            let dz = sol[..n].to_vec();
            let dy = sol[n..].to_vec();
            let alpha_max = self.fraction_to_boundary(&z, &dz, tau);

            let theta = l1(&ev.residual);
            let phi = self.barrier_value(ev.objective, &z, mu);
            let gphi_d: f64 = grad_phi.iter().zip(&dz).map(|(a, b)| a * b).sum();

            let tiny = dz
                .iter()
                .zip(&z)
                .all(|(d, v)| d.abs() / (1.0 + v.abs()) < 10.0 * f64::EPSILON);

            let mut accepted: Option<(Vec<f64>, Vec<f64>, f64, Evaluation)> = None;
            if tiny {
                let trial = axpy(&z, alpha_max, &dz);
                let tev = self.evaluate(&trial);
                accepted = Some((trial, dz.clone(), alpha_max, tev));
                force_mu_decrease = true;
            } else {
                let alpha_min = {
                    let base = if gphi_d < 0.0 {
                        let mut a = GAMMA_THETA.min(GAMMA_PHI * theta / -gphi_d);
                        if theta <= theta_min {
                            a = a.min(DELTA * theta.powf(S_THETA) / (-gphi_d).powf(S_PHI));
                        }
                        a
                    } else {
                        GAMMA_THETA
                    };
                    GAMMA_ALPHA * base
                };
                let mut alpha = alpha_max;
                let mut first = true;
                while alpha >= alpha_min {
                    let trial = axpy(&z, alpha, &dz);
                    let tev = self.evaluate(&trial);
                    let t_theta = l1(&tev.residual);
                    let t_phi = self.barrier_value(tev.objective, &trial, mu);
                    match check_acceptance(
                        &filter, theta, phi, gphi_d, alpha, t_theta, t_phi, theta_max, theta_min,
                    ) {
                        Some(f_type) => {
                            if !f_type {
                                filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
                            }
                            accepted = Some((trial, dz.clone(), alpha, tev));
                            break;
                        }
                        None => {
                            if first && t_theta >= theta {
                                if let Some(soc) = self.second_order_correction(
                                    &z, &rhs, &ev.residual, &tev.residual, alpha, tau, &filter, theta,
                                    phi, gphi_d, theta_max, theta_min, mu,
                                ) {
                                    let (trial, step, a, tev, f_type) = soc;
                                    if !f_type {
                                        filter.push((
                                            (1.0 - GAMMA_THETA) * theta,
                                            phi - GAMMA_PHI * theta,
                                        ));
                                    }
                                    accepted = Some((trial, step, a, tev));
                                    break;
                                }
                            }
                        }
                    }
                    first = false;
                    alpha *= 0.5;
                }
            }

            match accepted {
                Some((trial, step, alpha, tev)) => {
                    let (dzl, dzu) = self.multiplier_steps(&z, &step, &zl, &zu, mu);
                    let alpha_z = self.multiplier_fraction(&zl, &zu, &dzl, &dzu, tau);
                    for j in 0..m {
                        y[j] += alpha * dy[j];
                    }
                    for i in 0..n {
                        zl[i] += alpha_z * dzl[i];
                        zu[i] += alpha_z * dzu[i];
                    }
                    z = trial;
                    self.safeguard_multipliers(&z, &mut zl, &mut zu, mu);
                    ev = tev;
                }
                None => {
                    filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
                    match self.restoration(&z, mu, tau, &filter, theta) {
                        Some((trial, tev)) => {
                            z = trial;
                            ev = tev;
                            for i in 0..n {
                                if self.has_lower[i] {
                                    zl[i] = zl[i].min(1e3).max(mu / (z[i] - self.lower[i]).max(1e-20) * 1e-3);
                                }
                                if self.has_upper[i] {
                                    zu[i] = zu[i].min(1e3).max(mu / (self.upper[i] - z[i]).max(1e-20) * 1e-3);
                                }
                            }
                            self.safeguard_multipliers(&z, &mut zl, &mut zu, mu);
                            let g = self.gradient(&z);
                            let j = self.jacobian(&z);
                            y = self.least_squares_multipliers(&g, &j, &zl, &zu);
                        }
                        None => {
                            status = SolveStatus::RestorationFailed;
                            break;
                        }
                    }
                }
            }
            grad = self.gradient(&z);
            jac = self.jacobian(&z);
            iterations += 1;
        }

        let kkt_error = self.optimality_error(&z, &grad, &jac, &y, &zl, &zu, &ev.residual, 0.0);
        let constraint_violation = self.constraint_violation(&z, &ev.residual);
        if self.options.verbose {
            self.log.push(format!("exit {status:?} after {iterations} iterations"));
        }
        Solution {
            status,
            objective: ev.objective,
            x: z[..nx].to_vec(),
            constraint_multipliers: y,
            bound_multipliers_lower: zl[..nx].to_vec(),
            bound_multipliers_upper: zu[..nx].to_vec(),
            kkt_error,
            constraint_violation,
            iterations,
            log: self.log,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn second_order_correction(
        &self,
        z: &[f64],
        rhs: &[f64],
        residual: &[f64],
        trial_residual: &[f64],
        alpha: f64,
        tau: f64,
        filter: &[(f64, f64)],
        theta: f64,
        phi: f64,
        gphi_d: f64,
        theta_max: f64,
        theta_min: f64,
        mu: f64,
    ) -> Option<(Vec<f64>, Vec<f64>, f64, Evaluation, bool)> {
        let (n, m) = (self.n, self.m);
        let mut c_soc: Vec<f64> = (0..m).map(|j| alpha * residual[j] + trial_residual[j]).collect();
        let mut theta_prev = l1(trial_residual);
        let mut alpha_soc_prev = alpha;
        for _ in 0..MAX_SOC {
            let mut r = rhs.to_vec();
            for j in 0..m {
                r[n + j] = -c_soc[j];
            }
            let sol = self.solve_kkt(&r);
            let dz = sol[..n].to_vec();
            let alpha_soc = self.fraction_to_boundary(z, &dz, tau);
            let trial = axpy(z, alpha_soc, &dz);
            let tev = self.evaluate(&trial);
            let t_theta = l1(&tev.residual);
            let t_phi = self.barrier_value(tev.objective, &trial, mu);
            if let Some(f_type) = check_acceptance(
                filter, theta, phi, gphi_d, alpha_soc_prev, t_theta, t_phi, theta_max, theta_min,
            ) {
                // the accepted correction replaces the primal direction; the
                // step length is already folded into `trial`
                let step: Vec<f64> = dz.iter().map(|d| d * alpha_soc / alpha).collect();
                return Some((trial, step, alpha, tev, f_type));
            }
            if t_theta > KAPPA_SOC * theta_prev {
                return None;
            }
            theta_prev = t_theta;
            alpha_soc_prev = alpha_soc;
            for j in 0..m {
                c_soc[j] = alpha_soc * c_soc[j] + tev.residual[j];
            }
        }
        None
    }

    /// Reduces the constraint violation with proximal least-norm steps until
    /// the iterate becomes acceptable to the filter.
    fn restoration(
        &mut self,
        z0: &[f64],
        mu: f64,
        tau: f64,
        filter: &[(f64, f64)],
        theta_start: f64,
    ) -> Option<(Vec<f64>, Evaluation)> {
        let (n, m) = (self.n, self.m);
        let mut z = z0.to_vec();
        let mut ev = self.evaluate(&z);
        let zeta = mu.sqrt().max(1e-6);
        for _ in 0..100 {
            if self.timed_out() {
                return None;
            }
            let theta = l1(&ev.residual);
            let mut diag = vec![zeta; n];
            for i in 0..n {
                if self.has_lower[i] {
                    diag[i] += mu / (z[i] - self.lower[i]).powi(2);
                }
                if self.has_upper[i] {
                    diag[i] += mu / (self.upper[i] - z[i]).powi(2);
                }
            }
            let jac = self.jacobian(&z);
            let hess = vec![0.0; self.hess_len];
            self.fill_kkt(&hess, &jac, &diag, 0.0, DELTA_C);
            if !matches!(
                self.ldl.factor(&self.kkt, PIVOT_TOL),
                Factorization::Ok { .. }
            ) {
                return None;
            }
            let mut rhs = vec![0.0; n + m];
            for j in 0..m {
                rhs[n + j] = -ev.residual[j];
            }
            let sol = self.solve_kkt(&rhs);
            let dz = &sol[..n];
            let mut alpha = self.fraction_to_boundary(&z, dz, tau);
            let mut moved = false;
            while alpha > 1e-10 {
                let trial = axpy(&z, alpha, dz);
                let tev = self.evaluate(&trial);
                let t_theta = l1(&tev.residual);
                if t_theta <= (1.0 - 1e-4 * alpha) * theta {
                    z = trial;
                    ev = tev;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                return None;
            }
            let theta_new = l1(&ev.residual);
            let phi_new = self.barrier_value(ev.objective, &z, mu);
            let acceptable = filter
                .iter()
                .all(|&(ft, fp)| theta_new < ft || phi_new < fp);
            if acceptable && theta_new <= 0.9 * theta_start {
                return Some((z, ev));
            }
            if theta_new < 1e-12 {
                return Some((z, ev));
            }
        }
        None
    }
}

#[allow(clippy::too_many_arguments)]
fn check_acceptance(
    filter: &[(f64, f64)],
    theta: f64,
    phi: f64,
    gphi_d: f64,
    alpha: f64,
    t_theta: f64,
    t_phi: f64,
    theta_max: f64,
    theta_min: f64,
) -> Option<bool> {
    if !t_phi.is_finite() || !t_theta.is_finite() || t_theta > theta_max {
        return None;
    }
    if !filter.iter().all(|&(ft, fp)| t_theta < ft || t_phi < fp) {
        return None;
    }
    let switching = gphi_d < 0.0 && alpha * (-gphi_d).powf(S_PHI) > DELTA * theta.powf(S_THETA);
    if theta <= theta_min && switching {
        (t_phi <= phi + ETA_PHI * alpha * gphi_d).then_some(true)
    } else {
        (t_theta <= (1.0 - GAMMA_THETA) * theta || t_phi <= phi - GAMMA_PHI * theta).then_some(false)
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn axpy(z: &[f64], alpha: f64, dz: &[f64]) -> Vec<f64> {
    z.iter().zip(dz).map(|(a, b)| a + alpha * b).collect()
}
