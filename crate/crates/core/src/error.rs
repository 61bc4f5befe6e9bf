//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by path calculus, lattice solvers, schemes, and hedging
/// simulations.
#[derive(Debug, Error)]
pub enum PathwiseError {
    /// A partition level above the stored resolution was requested.
    #[error("partition level {requested} exceeds maximum level {max}")]
    LevelExceeded { requested: u32, max: u32 },

    /// Vector or matrix dimensions do not match.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An index (asset coordinate, fixing, node) is out of range.
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    /// Input data failed a structural or numerical validation check.
    #[error("validation failed: {0}")]
    Validation(String),

    /// A query left the domain covered by a grid.
    #[error("query ({t}, {x:?}) outside grid domain")]
    OutsideGrid { t: f64, x: Vec<f64> },

    /// The explicit scheme's stability bound was violated.
    #[error("CFL violation: dt = {dt:.3e} exceeds stability bound {bound:.3e}")]
    CflViolation { dt: f64, bound: f64 },

    /// The nested-solve budget of the recursive scheme was exceeded.
    #[error("nested solve budget exceeded: {required} solves > cap {cap}")]
    BudgetExceeded { required: u64, cap: u64 },

    /// A Cholesky factorization failed (matrix not positive definite).
    #[error("covariance matrix not positive definite at t = {t}, x = {x:?}")]
    NotPositiveDefinite { t: f64, x: Vec<f64> },

    /// The fixing schedule has been consumed past its last interval.
    #[error("fixing schedule exhausted at interval {interval}")]
    ScheduleExhausted { interval: usize },

    /// Payoff expression could not be parsed.
    #[error("payoff parse error: {0}")]
    PayoffParse(String),

    /// An operation precondition does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, PathwiseError>;
