use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow in {0}")]
    Overflow(&'static str),

    #[error("support violation: pmf({s}) = {value:e} for {context}")]
    SupportViolation {
        s: usize,
        value: f64,
        context: String,
    },

    #[error("pmf normalization off by {deviation:e} ({context})")]
    Normalization { deviation: f64, context: String },

    #[error("model consistency: {0}")]
    ModelConsistency(String),

    #[error("precision insufficient: residual {residual:e} exceeds {limit:e}; raise precision_bits")]
    PrecisionInsufficient { residual: f64, limit: f64 },

    #[error("truncation cap too small: tail mass {tail:e} exceeds tolerance {tolerance:e}")]
    CapTooSmall { tail: f64, tolerance: f64 },

    #[error("refused: {0}")]
    Refused(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
