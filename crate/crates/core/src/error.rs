//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller handed in something outside a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical procedure failed to converge or produced non-finite data.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Escape did not happen within the time budget.
    #[error("trapped or budget exceeded: {0}")]
    Trapped(String),

    /// The energy is below the admissible threshold for the requested task.
    #[error("energy below admissible threshold: {0}")]
    Inadmissible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn trapped(msg: impl Into<String>) -> Self {
        Error::Trapped(msg.into())
    }

    pub fn inadmissible(msg: impl Into<String>) -> Self {
        Error::Inadmissible(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
