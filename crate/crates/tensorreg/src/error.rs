use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] tensorreg_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 2 for invalid input, 3 for non-convergence, 1 for
    /// everything else.
    pub fn exit_code(&self) -> i32 {
        use tensorreg_core::Error as C;
        match self {
            Error::NotConverged(_) => 3,
            Error::Usage(_) | Error::Json(_) | Error::Format { .. } => 2,
            Error::Core(e) => match e {
                C::SvdFailure => 1,
                _ => 2,
            },
            Error::Io { .. } | Error::Csv(_) => 1,
        }
    }
}
