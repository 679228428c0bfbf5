//! Crate-wide error type.

use thiserror::Error;

/// Coarse error category, used by callers (e.g. the CLI) to map failures to
/// exit codes without matching on every variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid configuration or invalid arguments to an operation.
    Config,
    /// Malformed or inconsistent input data.
    Data,
    /// A failure at run time: degenerate model, failed fit, I/O, etc.
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid unit at row {row}: {reason}")]
    InvalidUnit { row: usize, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("identification degenerate: zero mass on margin {margin}")]
    DegenerateIdentification { margin: String },

    #[error("undefined extrapolation: conditioning event {event} has zero probability")]
    UndefinedExtrapolation { event: String },

    #[error("nothing to extrapolate: pattern has no missing components")]
    NothingToExtrapolate,

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("fit did not converge after {iterations} iterations (max score {max_score:.3e})")]
    NoConvergence { iterations: usize, max_score: f64 },

    #[error("logistic fit diverged (separation) in {context}")]
    Separation { context: String },

    #[error("stratum {stratum} has no observed values of {covariate}")]
    EmptyStratum { stratum: String, covariate: String },

    #[error("imputation model fit failed in stratum {stratum}: {source}")]
    StratumFit {
        stratum: String,
        #[source]
        source: Box<Error>,
    },

    #[error("no complete cases in dataset")]
    NoCompleteCases,

    #[error("gibbs chain failure: {0}")]
    ChainFailure(String),

    #[error("imputation {replication} failed: {source}")]
    Imputation {
        replication: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("data error at line {line}: {reason}")]
    DataFormat { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) | Error::InvalidProbabilities(_) | Error::NonFinite(_) => {
                ErrorKind::Config
            }
            Error::InvalidUnit { .. }
            | Error::EmptyDataset
            | Error::DataFormat { .. }
            | Error::Csv(_) => ErrorKind::Data,
            Error::Imputation { source, .. } | Error::StratumFit { source, .. } => source.kind(),
            _ => ErrorKind::Runtime,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
