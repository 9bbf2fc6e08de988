use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),

    #[error("cell ({row}, {col}) outside {rows}x{cols} array")]
    OutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("{line} {index} is power-gated")]
    GatedLine { line: &'static str, index: usize },

    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("no enabled rows to select from")]
    EmptySelection,

    #[error("sparsity {k} exceeds signal length {n}")]
    SparsityTooLarge { k: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("metric undefined: every frame has zero reference energy")]
    UndefinedMetric,

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
