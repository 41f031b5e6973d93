use thiserror::Error;

/// Errors raised by model construction, fitting and I/O.
#[derive(Debug, Error)]
pub enum GamError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "feature {feature} is degenerate: {distinct} distinct values, need at least {required}"
    )]
    DegenerateFeature {
        feature: usize,
        distinct: usize,
        required: usize,
    },

    #[error("data error at row {row}, column '{column}': {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error("solver diverged: {0}")]
    SolverDiverged(String),

    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl GamError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        GamError::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, GamError>;
