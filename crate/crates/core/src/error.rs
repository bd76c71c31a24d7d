use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("cyclic prefix too short: need {needed} samples, frame carries {have}")]
    CyclicPrefixTooShort { needed: usize, have: usize },

    #[error("channel has {taps} taps but only {subcarriers} subcarriers")]
    TooManyTaps { taps: usize, subcarriers: usize },

    #[error("zero input power on antenna {antenna}; quantizer gain undefined")]
    ZeroPower { antenna: usize },

    #[error("rank-deficient effective channel on subcarrier {subcarrier} (condition number {condition:e})")]
    RankDeficient { subcarrier: usize, condition: f64 },

    #[error("channel file: {0}")]
    ChannelFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
