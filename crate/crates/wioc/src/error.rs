use thiserror::Error;

/// Error variants shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Input violates a precondition (empty list, non-finite entry, bad parameter).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Operation requested in a mode the implementation does not support.
    #[error("unsupported mode: {0}")]
    Unsupported(String),

    /// A numeric computation failed (non-finite intermediate, diverging solve).
    #[error("numeric failure in {context}: {detail}")]
    Numeric { context: String, detail: String },

    /// Generator or experiment configuration is unusable.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    /// File contents do not match the declared format.
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
}

impl Error {
    pub fn numeric(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
