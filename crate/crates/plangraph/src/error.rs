use std::io;
use std::path::PathBuf;

use plangraph_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes of the command line.
pub mod exit {
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
    pub const IO: i32 = 5;
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) => match e {
                CoreError::Config(_) | CoreError::Usage(_) => exit::USAGE,
                CoreError::NonFinite { .. } | CoreError::MissingGrad { .. } => exit::NUMERIC,
                _ => exit::DATA,
            },
            Error::Io { .. } => exit::IO,
            Error::Parse { .. } | Error::Format(_) => exit::DATA,
            Error::Usage(_) => exit::USAGE,
        }
    }
}
