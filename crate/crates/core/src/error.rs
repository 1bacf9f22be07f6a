use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state {state} out of range (state count {count})")]
    StateOutOfRange { state: usize, count: usize },

    #[error("action {action} out of range (action count {count})")]
    ActionOutOfRange { action: usize, count: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no counts recorded for key {0}")]
    UndefinedModel(usize),

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("value iteration did not converge within {0} sweeps")]
    NoConvergence(usize),

    #[error("map error on line {line}: {message}")]
    Map { line: usize, message: String },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
