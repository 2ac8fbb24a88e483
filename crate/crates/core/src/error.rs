use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A malformed row in a delimited input file.
    #[error("{source_name}: line {line}, column `{column}`: {message}")]
    Parse {
        source_name: String,
        line: u64,
        column: String,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("template error: {0}")]
    Template(String),

    /// Files that must be line-aligned disagree in length.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for evaluation-time data errors, 2 for
    /// configuration and input errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Alignment(_) | Error::Eval(_) | Error::Backend(_) => 1,
            _ => 2,
        }
    }
}
