use thiserror::Error;

pub type Result<T> = std::result::Result<T, SrfError>;

#[derive(Debug, Error)]
pub enum SrfError {
    #[error("dimension {n} is too large (corner enumeration is capped at n <= {max})")]
    DimensionTooLarge { n: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("sample budget exceeded: {requested} points requested, limit is {limit}")]
    BudgetExceeded { requested: f64, limit: usize },

    #[error("evaluator failure{}: {message}", corner.map(|c| format!(" at corner {c}")).unwrap_or_default())]
    Evaluator {
        corner: Option<usize>,
        message: String,
    },

    #[error("gradient unsupported: the oracle does not provide gradients (white-box methods need them)")]
    GradientUnsupported,

    #[error("beta {beta} out of range for n={n}: requires 0 <= beta < {limit}")]
    BetaOutOfRange { beta: f64, n: usize, limit: f64 },

    #[error("invalid optimizer parameters: {0}")]
    InvalidParams(String),

    #[error("invalid function spec: {0}")]
    InvalidSpec(String),

    #[error("failed to spawn evaluator `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },

    #[error("evaluator handshake timed out after {0:?}")]
    HandshakeTimeout(std::time::Duration),

    #[error("malformed evaluator response: {0}")]
    MalformedResponse(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("evaluator reported error for request {id}: {message}")]
    Remote { id: u64, message: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SrfError {
    pub(crate) fn evaluator(message: impl Into<String>) -> Self {
        SrfError::Evaluator {
            corner: None,
            message: message.into(),
        }
    }

    /// Attach a corner index to an evaluator failure. Other errors pass through.
    pub(crate) fn at_corner(self, index: usize) -> Self {
        match self {
            SrfError::Evaluator { message, .. } => SrfError::Evaluator {
                corner: Some(index),
                message,
            },
            SrfError::Remote { id, message } => SrfError::Evaluator {
                corner: Some(index),
                message: format!("request {id}: {message}"),
            },
            other => other,
        }
    }

    /// True for failures that originate in the function evaluator rather than
    /// in the caller's configuration.
    pub fn is_evaluator_failure(&self) -> bool {
        matches!(
            self,
            SrfError::Evaluator { .. }
                | SrfError::Spawn { .. }
                | SrfError::HandshakeTimeout(_)
                | SrfError::MalformedResponse(_)
                | SrfError::Protocol(_)
                | SrfError::Remote { .. }
        )
    }
}
