use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file could not be parsed. `row` is set when the problem is local to one row.
    #[error("load error in {path}{}: {reason}", row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    Load {
        path: PathBuf,
        row: Option<usize>,
        reason: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("non-finite loss in head {head} at step {step} (loss = {loss})")]
    NonFiniteLoss { head: usize, step: usize, loss: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(
        path: impl Into<PathBuf>,
        row: Option<usize>,
        reason: impl Into<String>,
    ) -> Self {
        Error::Load {
            path: path.into(),
            row,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
