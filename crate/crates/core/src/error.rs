use thiserror::Error;

/// Errors raised by ingestion, estimation and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid date index: {0}")]
    DateIndex(String),

    #[error("empty intersection of date ranges between {0}")]
    DisjointPanels(String),

    #[error("column `{0}` has fewer than two non-missing observations")]
    InsufficientData(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("not enough observations: T = {t} but {required} are required")]
    TooFewObservations { t: usize, required: usize },

    #[error("design matrix is rank deficient; collinear columns: {}", .columns.join(", "))]
    Singular { columns: Vec<String> },

    #[error("model is under-identified: {0}")]
    UnderIdentified(String),

    #[error("weighting matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("{0} is undefined for the given input")]
    Undefined(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
