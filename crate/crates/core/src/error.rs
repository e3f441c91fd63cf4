use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor argument or operation input is outside its declared range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {x} is outside the support [{lo}, {hi}]")]
    OutOfSupport { x: f64, lo: f64, hi: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A search ran out of its node budget before it could prove an answer.
    #[error("budget exceeded after {nodes} branch nodes")]
    BudgetExceeded { nodes: u64 },

    #[error("subset scan too large: |S| = {size} exceeds {limit}")]
    SubsetScanTooLarge { size: usize, limit: usize },

    #[error("degenerate state: {0}")]
    Degenerate(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
