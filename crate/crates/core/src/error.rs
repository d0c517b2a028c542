use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GwError {
    #[error("invalid distribution: {0}")]
    InvalidLaw(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cannot sample: law has untracked tail mass {tail_mass:e} and no parametric descriptor")]
    Unsampleable { tail_mass: f64 },

    #[error("variance undefined: law has tail mass {tail_mass:e} and no parametric descriptor")]
    VarianceUndefined { tail_mass: f64 },

    #[error("population overflow: offspring of {parents} individuals exceeds u64")]
    Overflow { parents: u64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last iterate {last})")]
    NoConvergence { iterations: usize, last: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

pub type Result<T> = std::result::Result<T, GwError>;
