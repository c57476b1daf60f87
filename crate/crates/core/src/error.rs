use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
///
/// Variants map onto the CLI exit-code taxonomy through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{0}")]
    Domain(String),

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular leave-one-out denominator at point {index}: {detail}")]
    Singular { index: usize, detail: String },

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 I/O, 2 configuration / domain, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            Error::Parse { .. } | Error::Domain(_) | Error::Consistency(_) | Error::Config(_) => 2,
            Error::Singular { .. } | Error::Numerical(_) => 3,
        }
    }
}
