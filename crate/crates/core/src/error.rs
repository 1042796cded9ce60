use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error)]
pub enum MottError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition failed: {message}")]
    Precondition {
        message: String,
        /// Smallest environment half-width that would satisfy the call, when
        /// the failure is a window-size problem.
        required_half_width: Option<usize>,
    },

    #[error("nodes are disconnected: effective resistance is infinite")]
    Disconnected,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("grid too coarse: {message} (try delta_u <= {suggested_delta})")]
    Grid { message: String, suggested_delta: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl MottError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        MottError::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        MottError::Domain(msg.into())
    }

    pub(crate) fn window(msg: impl Into<String>, required: usize) -> Self {
        MottError::Precondition {
            message: msg.into(),
            required_half_width: Some(required),
        }
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        MottError::Precondition {
            message: msg.into(),
            required_half_width: None,
        }
    }
}

pub type Result<T> = std::result::Result<T, MottError>;
