//! Embedded convex solvers.

pub mod lmi;
pub mod lp;
pub mod qp;

pub use lmi::{find_cost_matrix, CostMatrix, LmiSettings};
pub use lp::{
    solve_lp, solve_standard, Constraints, LinearProgram, LpSolution, Sense, StandardSolution,
};
pub use qp::{solve_qp, solve_qp_with, QpSettings, QpSolution, QuadraticProgram};
