//! Finite-difference machinery for backward terminal-value problems and the
//! checks the no-arbitrage argument rests on numerically: discrete maximum
//! principle, positivity propagation, and the martingale property of solved
//! surfaces along generated paths.

pub mod checks;
pub mod grid;
pub mod model;
pub mod solver;
pub mod tridiag;

pub use checks::{
    growth_envelope, martingale_check, maximum_principle_check, pde_residual, MartingaleReport,
    MaxPrincipleReport,
};
pub use grid::{Axis, GridSolution, GridSpec};
pub use model::{
    log_transform, CovMatrix, CovarianceFamily, LocalVolModel, LogTransformed, ModelValidation,
    Surface2d,
};
pub use solver::{min_steps_2d, solve_tvp};
