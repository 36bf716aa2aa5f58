use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The variants are grouped by the exit code the command-line front end maps
/// them to: configuration problems, data problems and detector failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: file is empty")]
    EmptyFile { path: PathBuf },

    #[error("{path}: missing required column `{column}`")]
    Schema { path: PathBuf, column: String },

    #[error("{path}: row {row}, column `{column}`: {message}")]
    Validation {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{0}` has no non-missing values")]
    AllMissing(String),

    #[error("labels contain a single class; both classes are required")]
    SingleClass,

    #[error("solver did not converge after {iterations} iterations (KKT residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("training diverged at epoch {epoch} (loss {loss}); lower the learning rate (currently {learning_rate})")]
    Divergence {
        epoch: usize,
        loss: f64,
        learning_rate: f64,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error originates in a detector rather than in input data
    /// or configuration.
    pub fn is_detector_failure(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::Divergence { .. } | Error::SingleClass
        )
    }

    /// True for configuration and argument errors.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidArgument(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
