use thiserror::Error;

/// Errors raised by the workbench. Every variant carries enough context to
/// reproduce the failing call from a config.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("integration failure: {msg}")]
    Integration { msg: String, partial: Vec<Vec<f64>> },
    #[error("inversion failure: {0}")]
    Inversion(String),
    #[error("no convergence after {iterations} iterations (last estimate {last})")]
    NoConvergence { iterations: usize, last: f64 },
    #[error("domain exit: {0}")]
    DomainExit(String),
    #[error("construction error: {0}")]
    Construction(String),
    #[error("fit error: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
