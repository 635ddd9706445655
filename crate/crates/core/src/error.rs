use thiserror::Error;

/// Errors produced by the operators, solvers and file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: String, actual: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spectral system is singular at frequency ({row}, {col})")]
    Singular { row: usize, col: usize },

    #[error("newton iteration did not converge after {iterations} iterations (last iterate {last})")]
    NewtonNonConvergence { iterations: usize, last: f64 },

    #[error("conjugate gradients did not reach tolerance after {iterations} iterations (relative residual {residual:e})")]
    CgNonConvergence { iterations: usize, residual: f64 },

    #[error("non-finite values produced in step `{step}` at iteration {iteration}")]
    NonFinite { step: &'static str, iteration: usize },

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::NewtonNonConvergence { .. }
                | Error::CgNonConvergence { .. }
                | Error::NonFinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
