use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("infeasible grid: budget {budget} is smaller than the {required} categorical combinations")]
    InfeasibleGrid { budget: usize, required: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("strategy {strategy} does not support this space: {reason}")]
    UnsupportedStrategy { strategy: &'static str, reason: String },

    #[error("invalid model state: {0}")]
    InvalidState(String),

    #[error("dataset too small: {rows} rows, need at least {min}")]
    TooSmall { rows: usize, min: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("semantic error: {0}")]
    Semantic(String),

    #[error("binding error: {0}")]
    Binding(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
