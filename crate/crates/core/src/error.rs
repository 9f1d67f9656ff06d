use thiserror::Error;

/// Errors raised by the model, simulators and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A caller-supplied value is outside the operation's domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// The parameters are well formed but no theory covers them (e.g. `b <= 1`).
    #[error("unsupported parameter: {0}")]
    Unsupported(String),
    /// The requested instance exceeds a configured size budget.
    #[error("resource budget exceeded: {0}")]
    Resource(String),
    /// An exact identity that must hold on every trace was violated.
    #[error("integrity check failed: {0}")]
    Integrity(String),
    /// A numerical procedure failed to converge or hit a singular system.
    #[error("diagnostic: {0}")]
    Diagnostic(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
