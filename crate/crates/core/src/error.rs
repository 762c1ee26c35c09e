use alloc::string::String;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rejected input: {0}")]
    InvalidInput(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("unsupported diagnostic: {0}")]
    Unsupported(String),
    #[error("diverged at outer iteration {k}: {reason}")]
    Diverged { k: usize, reason: String },
    #[error("empty result: {0}")]
    Empty(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
