//! Strictly pathwise Delta hedging of exotic options.
//!
//! The crate builds hedging strategies for payoffs fixed at discrete dates
//! without any probabilistic model of the underlying: price trajectories are
//! only assumed to possess quadratic covariations prescribed by a local
//! volatility field along a fixed refining sequence of dyadic partitions.
//! Portfolio values then follow from pathwise (Föllmer) integration, hedge
//! ratios from gradients of backward terminal-value solves, and exotic
//! payoffs from a recursive chain of such solves across fixing dates.
//!
//! Modules:
//!
//! - [`partition`], [`path`], [`pathcalc`] — dyadic partitions, sampled
//!   trajectories, pathwise covariation and integration;
//! - [`lattice`] — terminal-value solvers, gradients, maximum-principle and
//!   martingale checks;
//! - [`scheme`] — the recursive solve chain for discretely fixed exotics;
//! - [`hedge`] — path generation, hedging simulation, robustness sweeps and
//!   arbitrage probes;
//! - [`functional`] — vertical/horizontal derivatives of path functionals
//!   with finite-dimensional state, and residuals of the path-dependent
//!   terminal-value equation;
//! - [`analytic`] — closed forms used as independent references.

pub mod analytic;
pub mod error;
pub mod functional;
pub mod hedge;
pub mod lattice;
pub mod partition;
pub mod path;
pub mod pathcalc;
pub mod rng;
pub mod payoff;
pub mod scheme;
pub mod spline;

mod sde;

pub use error::{PathwiseError, Result};
pub use partition::PartitionHierarchy;
pub use path::{Flavor, SampledPath};
