use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the solvers and their building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    /// LU factorization hit a pivot below the singularity threshold.
    #[error("singular matrix: pivot {pivot} vanished")]
    SingularMatrix { pivot: usize },

    /// `I - dg/dx_k` could not be factored for step `step` (1-based).
    #[error("singular diagonal block at step {step}")]
    SingularDiagonalBlock { step: usize },

    /// A state became NaN or infinite during iteration `iteration`.
    #[error("non-finite state encountered at iteration {iteration}")]
    NonFinite { iteration: usize },

    /// The per-step Newton solve of a sequential implicit integrator stalled.
    #[error("inner Newton solve failed at step {step} (residual {residual:e})")]
    InnerNewtonFailed { step: usize, residual: f64 },

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
