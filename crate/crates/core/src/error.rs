use thiserror::Error;

/// Errors produced by the detector models, signal chain and simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} = {value} is outside the supported range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("records are not sorted by gate index (first violation at position {index})")]
    Unsorted { index: usize },

    #[error("histogram binning mismatch: {0}")]
    BinningMismatch(String),

    #[error("histogram has no usable peak: {0}")]
    NoPeak(&'static str),

    #[error("configuration is invalid:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors raised because a model was queried outside its
    /// calibrated domain (as opposed to malformed configuration).
    pub fn is_model_range(&self) -> bool {
        matches!(self, Error::OutOfRange { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
