use thiserror::Error;

/// Errors surfaced by dataset ingestion, training and prediction.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: label column {column:?} not found")]
    LabelColumnNotFound { path: String, column: String },

    #[error("{path}: row {row}, column {column}: cannot parse {value:?} as a finite number")]
    BadCell {
        path: String,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        path: String,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset has a single class; at least two are required")]
    SingleClass,

    #[error("{context}: need at least {needed} instances, found {found}")]
    TooFewInstances {
        context: String,
        needed: usize,
        found: usize,
    },

    #[error("dimension mismatch: expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no usable sliding windows: every default width is zero for {features} features; pass explicit window widths")]
    NoWindows { features: usize },

    #[error("model file: {0}")]
    ModelFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;
