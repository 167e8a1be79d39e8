//! LP solving and branch-and-bound.

pub mod bnb;
pub mod lp;

use thiserror::Error;

pub use bnb::{branch_and_bound, branch_and_bound_with, BnbHooks, BnbLimits, BnbResult, BnbStatus};
pub use lp::{solve_lp, LinearProgram, LpOutcome, LpSession, LpSolution, Row, Sense, SessionOutcome};

/// Relative primal feasibility required of every LP point.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Distance from 0/1 below which a binary counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("relaxation is unbounded")]
    Unbounded,
}
