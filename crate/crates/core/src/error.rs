use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("block longer than sample (b = {b}, n = {n})")]
    BlockLongerThanSample { b: usize, n: usize },

    #[error("too many extremal blocks (k = {k}, m = {m}; need k <= m - 1)")]
    TooManyExtremalBlocks { k: usize, m: usize },

    #[error("degenerate sample: all block norms are zero")]
    DegenerateSample,

    #[error("insufficient positive tail data for k' = {k_prime}")]
    InsufficientTailData { k_prime: usize },

    #[error("non-contracting multiplier: E[log A] = {mean_log} must be negative")]
    NonContracting { mean_log: f64 },

    #[error("model is not a linear filter: {0}")]
    NotLinear(String),

    #[error("replicate {rep} (seed {seed}) failed: {source}")]
    Replicate {
        rep: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
