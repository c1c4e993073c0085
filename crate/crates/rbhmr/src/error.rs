use std::path::PathBuf;

/// Failure modes shared by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dictionary not unisolvent on span: {0}")]
    NotUnisolvent(String),
    #[error("nonlinear solve failed: {reason} (residual history {history:?})")]
    Divergence { reason: String, history: Vec<f64> },
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error in section `{section}`: {msg}")]
    Parse { section: String, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unsupported archive version {found} (expected {expected})")]
    Version { found: String, expected: String },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
