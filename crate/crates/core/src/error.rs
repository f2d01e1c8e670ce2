use std::path::PathBuf;

use thiserror::Error;

use crate::solver::SolverState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A solver stage (or line search) produced a non-finite state or could
    /// not find an admissible step. `state` is the last finite state, if any.
    #[error("diverged at stage {stage}: {reason}")]
    Divergence {
        stage: usize,
        reason: String,
        state: Option<Box<SolverState>>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
