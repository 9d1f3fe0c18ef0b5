use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A data row could not be interpreted. `row` is 1-based and counts the header.
    #[error("row {row}: {msg}")]
    Malformed { row: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("baseline column {column} has zero variance")]
    ZeroVariance { column: usize },

    #[error("matrix `{0}` is not symmetric positive definite")]
    NotSpd(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),

    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sampler aborted at iteration {iteration}: {source}")]
    Sampler {
        iteration: usize,
        #[source]
        source: Box<Error>,
        dump: Option<PathBuf>,
    },

    #[error("elicitation failed: {0}")]
    Elicitation(String),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("prediction: {0}")]
    Prediction(String),

    #[error("sample store: {0}")]
    Store(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status: 1 for configuration and usage problems, 2 for
    /// data and file problems, 3 for sampler failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidHyper(_) | Error::InvalidConfig(_) | Error::Config(_) => 1,
            Error::Sampler { .. } | Error::Numerical(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
