use std::path::PathBuf;

use thiserror::Error;

use crate::train::Checkpoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("segment is empty after encoding")]
    EmptySegment,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("every position in the batch is masked")]
    EmptyBatch,

    #[error("non-finite value encountered: {0}")]
    Numerical(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("no data: {0}")]
    EmptyData(String),

    #[error("probe dataset is empty for delta {delta} (longest segment has {max_len} symbols)")]
    EmptyDataset { delta: usize, max_len: usize },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, last_good: Option<Box<Checkpoint>> },

    #[error("checkpoint is incompatible: {0}")]
    IncompatibleCheckpoint(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("incomplete probe: {0}")]
    IncompleteProbe(String),

    #[error("signatures are incompatible: {0}")]
    IncompatibleSignatures(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Usage(_) => ErrorCategory::Usage,
            Error::Numerical(_) | Error::Diverged { .. } => ErrorCategory::Numeric,
            _ => ErrorCategory::Data,
        }
    }
}
