use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("argument out of range: {name} = {value} (allowed {allowed})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        allowed: &'static str,
    },

    #[error("solver did not converge: max mass error {max_mass_error:.3e} after {iterations} iterations")]
    NonConvergence {
        max_mass_error: f64,
        iterations: usize,
    },

    #[error("cell {cell} has no quadrature mass at the initial weights; the quadrature is too small for L")]
    EmptyCellAtStart { cell: usize },

    #[error("cost kind mismatch: partition uses {partition}, supplied value is for {supplied}")]
    CostKindMismatch { partition: String, supplied: String },

    #[error("failed to bracket the extrinsic constant b_p for p = {p}")]
    Bracketing { p: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
