use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the AMR engine.
#[derive(Debug, Error)]
pub enum AmrError {
    #[error("configuration error: `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("config line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("non-finite Riemann input")]
    NumericInput,

    #[error("numeric blowup on patch {patch} (level {level}) at step {step}")]
    NumericBlowup { patch: u64, level: usize, step: usize },

    #[error("CFL guard gave up after {rejections} consecutive rejections (last observed cfl {observed})")]
    CflAbort { rejections: usize, observed: f64 },

    #[error("empty level: no patch maxima to reduce")]
    EmptyLevel,

    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("pool: requested {requested} bytes exceeds chunk size {chunk}")]
    Oversize { requested: usize, chunk: usize },

    #[error("pool misuse: {0}")]
    PoolMisuse(String),

    #[error("scheduling error: {0}")]
    Scheduling(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed snapshot: {reason}")]
    Snapshot { path: PathBuf, reason: String },
}

impl AmrError {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        AmrError::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AmrError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = AmrError> = std::result::Result<T, E>;
