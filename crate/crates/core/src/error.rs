use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DrtError {
    /// Inconsistent dimensions, unsupported scheme/scenario combination or
    /// malformed configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical routine failed (non-convergence, singular system).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl DrtError {
    pub fn config(msg: impl Into<String>) -> Self {
        DrtError::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        DrtError::Domain(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        DrtError::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, DrtError>;
