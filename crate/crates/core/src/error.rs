use std::path::PathBuf;

use thiserror::Error;

use crate::harness::las::LasError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time {t} outside curve support [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("substep {substep} yr violates the diffusion stability bound; maximal stable substep is {max_stable} yr")]
    Cfl { substep: f64, max_stable: f64 },

    #[error("state layout mismatch: {0}")]
    Layout(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error(transparent)]
    Las(#[from] LasError),

    #[error("trial {trial} failed during {stage}: {source}")]
    Trial {
        trial: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { path: path.into(), msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
