use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: dimension mismatch (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{context}: non-finite value encountered")]
    NonFinite { context: &'static str },

    #[error("{0}: empty input")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parameter at index {index} is exactly zero; filtering requires a fully nonzero vector")]
    ZeroParameter { index: usize },

    #[error("degenerate threshold grid: all parameter magnitudes equal {0}")]
    DegenerateGrid(f64),

    #[error("episode already finished at step {step}")]
    EpisodeDone { step: usize },

    #[error("unknown {kind} `{value}`")]
    UnknownName { kind: &'static str, value: String },

    #[error("training diverged at iteration {iteration}, minibatch {batch}: {reason}")]
    Diverged {
        iteration: usize,
        batch: usize,
        reason: String,
    },

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("sweep cell failed at {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep stopped after {completed} units; resume to finish")]
    Interrupted { completed: usize },

    #[error("results table: {0}")]
    Table(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
