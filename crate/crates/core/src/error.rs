use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid prediction: {0}")]
    InvalidPrediction(String),

    #[error("time grids differ")]
    GridMismatch,

    #[error("nomogram criterion '{criterion}' matched {matched} rules for patient '{patient}' (expected exactly 1)")]
    RuleCoverage {
        criterion: String,
        patient: String,
        matched: usize,
    },

    #[error("invalid nomogram: {0}")]
    InvalidNomogram(String),

    #[error("training set is empty")]
    EmptyTraining,

    #[error("group count k={k} out of range 1..={n}")]
    GroupCount { k: usize, n: usize },

    #[error("missing prediction for patient '{0}'")]
    MissingPrediction(String),

    #[error("missing score for patient '{0}'")]
    MissingScore(String),

    #[error("concordance needs at least 2 ranks, got {0}")]
    TooFewRanks(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("horizon {0} excludes every patient")]
    UnusableHorizon(f64),

    #[error("AUC undefined: {positives} positives, {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },

    #[error("invalid threshold grid: {0}")]
    InvalidThresholds(String),

    #[error("sweep curve has no valid point at threshold <= 0")]
    MissingBasePoint,

    #[error("integrated Brier score undefined: {0}")]
    IbsUndefined(String),

    #[error("no comparable pairs")]
    NoComparablePairs,

    #[error("empty input")]
    EmptyInput,

    #[error("cox fit: {0}")]
    Cox(#[from] crate::coxph::CoxError),

    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
