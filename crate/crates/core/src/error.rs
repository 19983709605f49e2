use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("inconsistent state: {0}")]
    Inconsistent(String),
    #[error("bracket search failed: {0}")]
    Bracket(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("undefined similarity: both graphs are empty")]
    EmptySimilarity,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) | Error::Json(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Domain(_) | Error::Bracket(_) | Error::Inconsistent(_) | Error::EmptySimilarity => 4,
        }
    }
}
