use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no root found: {0}")]
    NoRoot(String),

    #[error("quadrature did not converge after {nodes} nodes (last two estimates {previous:e}, {last:e})")]
    QuadratureNotConverged { nodes: usize, previous: f64, last: f64 },

    #[error("quadratic form is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("eigen-solver failure: {0}")]
    Eigen(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerical method rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::InvalidInput(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {value}")))
    }
}
