use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

/// Errors produced by the inference core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected} features, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("integration error at x = {x:?}: grid mass {mass} outside [0.98, 1.02]")]
    Integration { x: Vec<f64>, mass: f64 },

    #[error("calibration error: group {group} has {size} calibration points, need at least {required}")]
    Calibration {
        group: usize,
        size: usize,
        required: usize,
    },

    #[error("point {index}: {cause}")]
    AtIndex { index: usize, cause: Box<Error> },

    #[error("stage `{stage}` failed: {cause}")]
    Stage {
        stage: &'static str,
        cause: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn at_index(index: usize, cause: Error) -> Self {
        Error::AtIndex {
            index,
            cause: Box::new(cause),
        }
    }

    /// Wraps an error with the name of the pipeline stage it came from.
    pub fn stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |cause| Error::Stage {
            stage,
            cause: Box::new(cause),
        }
    }

    /// True when the root cause is a configuration or usage problem rather
    /// than a data or runtime failure.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Dimension { .. } => true,
            Error::AtIndex { cause, .. } | Error::Stage { cause, .. } => cause.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
