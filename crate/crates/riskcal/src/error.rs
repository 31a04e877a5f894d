use thiserror::Error;

/// Errors surfaced by the calibration toolkit.
///
/// `Infeasible` is kept distinct from validation failures so callers (the CLI
/// in particular) can map it to its own exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("utility matrix: {0}")]
    InvalidUtility(String),

    #[error("forecast: {0}")]
    InvalidForecast(String),

    #[error("dataset: {0}")]
    InvalidDataset(String),

    #[error("population: {0}")]
    InvalidPopulation(String),

    #[error("dimension mismatch: expected {expected} labels, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error(
        "calibration infeasible: {0}; a true label likely has zero forecast \
         mass; re-ingest with a positive smoothing epsilon (--epsilon)"
    )]
    Infeasible(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
