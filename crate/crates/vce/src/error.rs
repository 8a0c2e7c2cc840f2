use std::io;
use std::path::PathBuf;

use thiserror::Error;
use vce_core::eval::EvalError;
use vce_core::{EngineError, GeoError, WorldError};

#[derive(Debug, Error)]
pub enum VceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid GeoJSON: {0}")]
    GeoJson(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = VceError> = std::result::Result<T, E>;

impl VceError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> VceError {
        let path = path.into();
        move |source| VceError::Io { path, source }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> VceError {
        VceError::Parse { path: path.into(), message: message.to_string() }
    }
}

impl From<io::Error> for VceError {
    fn from(source: io::Error) -> Self {
        VceError::Io { path: PathBuf::new(), source }
    }
}
