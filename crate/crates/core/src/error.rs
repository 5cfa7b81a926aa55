use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate distribution: truncated standard deviation {sigma:e} is below 1e-6")]
    DegenerateDistribution { sigma: f64 },

    #[error("decomposition trace is degenerate (rows numerically dependent)")]
    DegenerateTrace,

    #[error("statistic undefined for a singular matrix")]
    SingularStatistic,

    #[error("rows are not numerically full rank (failed at row {row})")]
    NotFullRank { row: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
