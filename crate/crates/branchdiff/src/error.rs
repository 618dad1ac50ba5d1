use thiserror::Error;

/// Errors raised by the numerical routines and parsers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// A model failed validation.
    #[error("invalid model: {0}")]
    InvalidModel(String),
    /// The rate matrix is reducible so the stationary vector is not unique.
    #[error("rate matrix is reducible: stationary vector is not unique")]
    Reducible,
    /// The rate matrix does not satisfy detailed balance.
    #[error("rate matrix is not reversible")]
    NotReversible,
    /// A linear system was singular or too badly conditioned.
    #[error("singular system: {0}")]
    Singular(String),
    /// An iterative solver hit its iteration cap.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        /// Iterations performed.
        iterations: usize,
        /// Residual at the last iteration.
        residual: f64,
    },
    /// Malformed textual input.
    #[error("parse error: {0}")]
    Parse(String),
}

/// Shorthand result type.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
