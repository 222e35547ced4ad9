use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("support violation at class {class}: p > 0 where q = 0")]
    SupportViolation { class: usize },

    #[error("distribution has zero total mass")]
    EmptyDistribution,

    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),

    #[error("coalition {0} is empty")]
    EmptyCoalition(usize),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("client {client} is already in coalition {coalition}")]
    SameCoalition { client: usize, coalition: usize },

    #[error("moving client {client} would empty coalition {coalition}")]
    WouldEmptyCoalition { client: usize, coalition: usize },

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("client {client}: computation latency {comp_latency} s leaves no time within the per-iteration budget {budget} s")]
    DeadlineBudgetExhausted {
        client: usize,
        comp_latency: f64,
        budget: f64,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
