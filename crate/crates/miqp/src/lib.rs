//! Solver for convex mixed-integer quadratic programs with a diagonal
//! quadratic objective and linear constraints.
//!
//! [`solve_qp`] solves the continuous relaxation; [`solve_miqp`] runs
//! branch-and-bound on top of it. Both are reachable through the
//! [`MiqpBackend`] trait so an external solver can be swapped in.

mod backend;
mod bnb;
mod error;
mod lp_format;
mod problem;
mod qp;
mod solution;

pub use backend::{BackendRegistry, BundledBackend, MiqpBackend, BUNDLED};
pub use bnb::solve_miqp;
pub use error::SolverError;
pub use lp_format::to_lp_string;
pub use problem::{Constraint, MiqpProblem, Sense, Variable};
pub use qp::{solve_qp, FEASIBILITY_TOL};
pub use solution::{MiqpSolution, SolveLimits, SolveStatus};
