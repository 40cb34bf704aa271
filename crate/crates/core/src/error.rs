use thiserror::Error;

#[derive(Debug, Error)]
pub enum FocusError {
    #[error("{what} out of range: {value} (bound {bound})")]
    Range {
        what: &'static str,
        value: usize,
        bound: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("format error in field `{field}`: {reason}")]
    Format { field: String, reason: String },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl FocusError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        FocusError::Argument(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FocusError::Validation(msg.into())
    }

    pub(crate) fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        FocusError::Format {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = FocusError> = std::result::Result<T, E>;
