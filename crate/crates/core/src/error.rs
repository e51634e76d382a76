use std::io;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not compose.
    #[error("structural error: {0}")]
    Structure(String),

    /// An accumulator left the signed 32-bit range.
    #[error("accumulator overflow in layer {layer}: {value} does not fit in i32")]
    Overflow { layer: usize, value: i64 },

    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A file does not follow its binary or text format.
    #[error("format error: {0}")]
    Format(String),

    /// A file parsed but its content violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Query text failed to parse.
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    /// Query parsed but is not well formed.
    #[error("semantic error: {0}")]
    Semantic(String),

    /// An internal invariant did not hold.
    #[error("invariant breach: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
