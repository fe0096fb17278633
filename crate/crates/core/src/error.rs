use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the diagnosis pipeline.
#[derive(Debug, Error)]
pub enum HkgError {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid label tree: {0}")]
    Structure(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("degenerate class counts: {0}")]
    DegenerateCounts(String),

    #[error("division by zero: {0}")]
    Division(String),

    #[error("format error in {source_name} at line {line}: {message}")]
    Format {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("embedding lookup failed: {0}")]
    Lookup(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("physics input error: {0}")]
    Physics(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("label tree mismatch: {0}")]
    TreeMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HkgError>;

impl HkgError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HkgError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        HkgError::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
