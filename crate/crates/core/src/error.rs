use std::path::PathBuf;

use thiserror::Error;

use crate::{dataset, eval, hyperopt, nn, optim, raterstats};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error, wrapping the per-module errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Network(#[from] nn::NnError),
    #[error(transparent)]
    Optim(#[from] optim::OptimError),
    #[error(transparent)]
    Search(#[from] hyperopt::SearchError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Raters(#[from] raterstats::RaterError),
    #[error(transparent)]
    Ensemble(#[from] crate::ensemble::EnsembleError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path} not found; run `{step}` first")]
    MissingInput { path: PathBuf, step: &'static str },
    #[error("model {0} diverged during training")]
    Diverged(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for errors caused by bad input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Config(_) | Error::MissingInput { .. } | Error::Json { .. } | Error::Csv { .. } => true,
            Error::Dataset(e) => e.is_validation(),
            Error::Raters(_) => true,
            Error::Search(_) => true,
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
