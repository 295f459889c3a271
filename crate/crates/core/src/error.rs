use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} = {value} exceeds the limit {limit}")]
    Capacity {
        what: &'static str,
        value: u64,
        limit: u64,
    },

    #[error("the configuration is absorbed: a single block remains")]
    Absorbed,

    #[error("trajectory stopped before absorption with {blocks} blocks")]
    NotAbsorbed { blocks: usize },

    #[error("time {requested} lies beyond the simulated horizon {covered}")]
    Horizon { requested: f64, covered: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
