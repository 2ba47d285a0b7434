use thiserror::Error;

/// Errors produced by fitting, forecasting, selection and simulation.
#[derive(Debug, Error)]
pub enum OdpcError {
    #[error("parse failure at row {row}, column {col}: {message}")]
    Parse { row: usize, col: usize, message: String },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("ragged rows: row {row} has {found} columns, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },

    /// Not enough periods for the requested lags or evaluation geometry.
    #[error("insufficient sample length: need at least {required} periods, got {actual}")]
    InsufficientLength { required: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    /// The reconstruction loadings B are identically zero, so the objective
    /// does not depend on the component weights.
    #[error("degenerate loadings: B is identically zero")]
    DegenerateLoadings,

    #[error("degenerate panel: {0}")]
    DegeneratePanel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl OdpcError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        OdpcError::InvalidParameter(msg.into())
    }

    pub(crate) fn mismatch(expected: impl ToString, actual: impl ToString) -> Self {
        OdpcError::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for errors caused by bad input or configuration rather than by
    /// numerical failure during estimation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            OdpcError::Parse { .. }
                | OdpcError::NonFinite { .. }
                | OdpcError::Ragged { .. }
                | OdpcError::InsufficientLength { .. }
                | OdpcError::DimensionMismatch { .. }
                | OdpcError::InvalidParameter(_)
                | OdpcError::Io(_)
                | OdpcError::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, OdpcError>;
