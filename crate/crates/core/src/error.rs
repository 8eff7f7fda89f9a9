use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("{what} must not be empty")]
    Empty { what: &'static str },

    #[error("batch too small: need at least {min}, got {got}")]
    BatchTooSmall { min: usize, got: usize },

    #[error("episode already finished; reset the environment before stepping")]
    EpisodeDone,

    #[error("non-finite gradient in {block} at index {index}; update rejected")]
    NonFiniteGradient { block: &'static str, index: usize },

    #[error("non-finite parameter in {block} at index {index} after update")]
    NonFiniteParam { block: &'static str, index: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
