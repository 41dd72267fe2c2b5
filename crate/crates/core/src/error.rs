use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A field could not be parsed. `row` is the 1-based data row.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("non-increasing times at row {row}")]
    NonIncreasingTime { row: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("series needs at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate three-point stencil at triple {index}")]
    DegenerateStencil { index: usize },

    #[error("model domain error at data row {row}, state {state}: {msg}")]
    Domain { row: usize, state: usize, msg: String },

    #[error("model produced a non-finite value while probing: {0}")]
    NonFiniteProbe(String),

    #[error("integration produced a non-finite state at t = {t}")]
    BlowUp { t: f64 },

    #[error("unknown model '{name}' (available: {available})")]
    UnknownModel { name: String, available: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient iterates for a convergence estimate: {0}")]
    InsufficientIterates(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
