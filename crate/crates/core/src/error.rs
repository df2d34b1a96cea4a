use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// A malformed input line; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("transcript {source_id}: {message}")]
    Transcript { source_id: String, message: String },

    #[error("unknown curriculum unit `{name}` (valid: {valid})")]
    UnknownUnit { name: String, valid: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("tokenizer: {0}")]
    Tokenizer(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at step {step} (diagnostic checkpoint: {checkpoint})")]
    NonFinite { step: usize, checkpoint: String },

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("statistics: {0}")]
    Stats(String),
}

impl Error {
    /// Short machine-readable category used by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Parse { .. } => "parse",
            Error::Transcript { .. } => "transcript",
            Error::UnknownUnit { .. } => "unknown_unit",
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::OutOfRange(_) => "out_of_range",
            Error::Tokenizer(_) => "tokenizer",
            Error::Checkpoint(_) => "checkpoint",
            Error::NonFinite { .. } => "non_finite",
            Error::Eval(_) => "eval",
            Error::Stats(_) => "stats",
        }
    }
}
