use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error in {context}: {msg}")]
    Data { context: String, msg: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint error ({field}): {msg}")]
    Checkpoint { field: String, msg: String },

    #[error("gradient check harness: {0}")]
    Harness(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn data(context: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Data {
            context: context.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool.
    ///
    /// 1 usage/config, 2 data, 3 numeric/training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Parse { .. }
            | Error::Structural(_)
            | Error::Data { .. }
            | Error::Checkpoint { .. }
            | Error::Io { .. } => 2,
            Error::Training(_) | Error::Harness(_) => 3,
        }
    }
}
