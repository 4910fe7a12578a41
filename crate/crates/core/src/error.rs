use thiserror::Error;

/// Errors raised by the simulation and exact-law routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration that violates a structural requirement (e.g. `k_n >= n`).
    #[error("config error: {0}")]
    Config(String),
    /// A specification string could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    /// An estimator was undefined for the observed sample.
    #[error("estimation error: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
