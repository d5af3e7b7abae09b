//! Error type shared across the crate.

use thiserror::Error;

/// All failure modes of the toolkit.
///
/// Each variant is a distinct category so callers (notably the CLI) can map
/// failures to stable exit codes.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Dimension or arity mismatch.
    #[error("shape error: {0}")]
    Shape(String),

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Mathematically degenerate input (zero norm, vanishing denominator,
    /// non-positive degree).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An identifier was not found on the expected axis.
    #[error("unknown {kind} identifier {id:?}")]
    Lookup { kind: &'static str, id: String },

    /// A category label missing from the vocabulary.
    #[error("category {0:?} not in vocabulary")]
    Vocabulary(String),

    /// A documented precondition was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Well-formed input that fails a range or consistency check.
    #[error("validation error at line {line}: {msg}")]
    Validation { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CoreError {
    /// Short machine-readable category name, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            CoreError::Shape(_) => "shape",
            CoreError::NonFinite(_) => "non-finite",
            CoreError::Degenerate(_) => "degenerate",
            CoreError::Lookup { .. } => "lookup",
            CoreError::Vocabulary(_) => "vocabulary",
            CoreError::Contract(_) => "contract",
            CoreError::Parse { .. } => "parse",
            CoreError::Validation { .. } => "validation",
            CoreError::Io(_) => "io",
            CoreError::Json(_) => "json",
        }
    }
}
