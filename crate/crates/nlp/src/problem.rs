/// Bounds at or beyond this magnitude are treated as infinite.
pub const INFINITY_BOUND: f64 = 1e19;

/// A smooth nonlinear program
///
/// ```text
/// min f(x)  s.t.  g_L <= g(x) <= g_U,  x_L <= x <= x_U
/// ```
///
/// Constraints with `g_L == g_U` are equalities. Sparse first and second
/// derivatives are supplied through fixed structures, queried once per
/// solve. The Hessian structure lists lower-triangle entries (`row >= col`)
/// of the Lagrangian Hessian `obj_factor * ∇²f + Σ λ_j ∇²g_j`.
pub trait NlpProblem {
    fn num_variables(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn variable_bounds(&self, lower: &mut [f64], upper: &mut [f64]);
    fn constraint_bounds(&self, lower: &mut [f64], upper: &mut [f64]);
    fn initial_point(&self, x: &mut [f64]);

    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn constraints(&self, x: &[f64], g: &mut [f64]);

    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    fn jacobian_values(&self, x: &[f64], values: &mut [f64]);

    fn hessian_structure(&self) -> Vec<(usize, usize)>;
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], values: &mut [f64]);
}
