//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or constructor argument.
    #[error("config: {0}")]
    Config(String),

    /// Caller passed data that violates an operation's preconditions.
    #[error("input: {0}")]
    Input(String),

    /// A numerical procedure failed (singular system, estimator blow-up).
    #[error("numeric: {0}")]
    Numeric(String),

    /// A binary container or CSV file is malformed.
    #[error("format: {0}")]
    Format(String),

    /// An artifact referenced by a manifest is missing.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
