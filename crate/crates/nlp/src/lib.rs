//! Self-contained sparse nonlinear programming.
//!
//! The crate provides a primal-dual interior point solver for problems
//! described through the [`NlpProblem`] trait, backed by a sparse LDLᵀ
//! factorization with a minimum-degree ordering.

pub mod ipm;
pub mod ldl;
pub mod ordering;
mod problem;

pub use ipm::{solve, Solution, SolveStatus, SolverOptions};
pub use problem::{NlpProblem, INFINITY_BOUND};
