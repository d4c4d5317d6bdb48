use thiserror::Error;

/// Errors raised by model construction and the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a structural or domain check.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("RPF requires irreducibility")]
    Reducible,

    #[error("eigen-solver did not converge (residual {residual:.3e})")]
    NonConvergence { residual: f64 },

    /// A numerical procedure ran but could not deliver its guarantee.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("budget exceeded: {0}")]
    Budget(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for errors caused by the caller's data rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid(_) | Error::Reducible)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
