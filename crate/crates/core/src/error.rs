use thiserror::Error;

/// Errors raised by the solvers and their numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("block {block} is not positive definite")]
    NotPositiveDefinite { block: usize },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("operator is indefinite or produced NaN at iteration {iteration}")]
    Indefinite { iteration: usize },

    #[error("Gaussian width has non-positive definite real part")]
    InvalidWidth,

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("self-convergence check failed: step halving changed the result by {change:e}")]
    SelfConvergence { change: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
