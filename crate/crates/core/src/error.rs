use thiserror::Error;

use crate::lifetime::LifetimeResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (shape mismatch, bad length, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// NaN or infinity showed up in the simulated state.
    #[error("numeric failure at trial {trial:?}, step {step}: {detail}")]
    Numeric {
        trial: Option<usize>,
        step: usize,
        detail: String,
    },

    /// A lifetime stopped early; `partial` holds the trials completed so far.
    #[error("lifetime aborted after {} trials: {cause}", partial.errors.len())]
    LifetimeAborted {
        partial: Box<LifetimeResult>,
        cause: Box<Error>,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    /// Plot input was empty or did not match the expected CSV schema.
    #[error("plot error: {0}")]
    Plot(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
