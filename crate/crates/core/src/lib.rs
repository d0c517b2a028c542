//! Galton-Watson branching process laboratory.
//!
//! Exact (cap-truncated) population laws, Monte Carlo simulation with
//! reproducible per-trajectory streams, pathwise couplings and numeric
//! certificates for extinction and survival.

pub mod analysis;
pub mod chain;
pub mod cli;
pub mod couplings;
pub mod error;
pub mod exact;
pub mod offspring;
pub mod rng;
pub mod stats;

pub use error::{GwError, Result};
pub use offspring::{convolve, convolve_power, OffspringLaw, Pmf};
