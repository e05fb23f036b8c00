//! A small mixed-integer linear programming toolkit.
//!
//! Problems carry integral coefficients, finite lower bounds and optional
//! upper bounds, and are always minimized. [`solve`] runs an exact presolve
//! followed by depth-first branch and bound; node relaxations are solved
//! either in rational arithmetic or in `f64` with integer-checked dual and
//! Farkas certificates, so reported optimality and infeasibility are proven
//! rather than tolerance-based. [`ExternalSolver`] hands the same problem to
//! any command-line solver that reads LP files.

mod bnb;
mod certify;
mod external;
mod lpfile;
mod presolve;
mod problem;
mod scalar;
mod simplex;

use std::time::Duration;

pub use bnb::{solve, Arithmetic, Solution, SolveOptions, SolveStats, Status};
pub use external::{parse_solution, to_solution, ExternalSolver, ParsedSolution};
pub use lpfile::{to_lp_string, write_lp};
pub use problem::{Constraint, Problem, Sense, VarId, Variable, Violation};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolveError {
    #[error("solver timed out after {0:?}")]
    Timeout(Duration),
    #[error("branch-and-bound node limit {0} reached")]
    NodeLimit(usize),
    #[error("problem is unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("solver backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("cannot parse solver output: {0}")]
    Parse(String),
}
