use thiserror::Error;

/// Errors raised by the estimators and exact routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{operation} is not supported for {system}")]
    Unsupported {
        operation: &'static str,
        system: &'static str,
    },

    #[error("root bracketing failed while solving for index {index}")]
    RootBracketing { index: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate ball: measure {0:e} is too small to define an orbit length")]
    DegenerateBall(f64),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("horizon too deep: image exceeded {cap} interval components at step {step}")]
    HorizonTooDeep { step: usize, cap: usize },
}

impl Error {
    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidParameter(_) | Error::Unsupported { .. })
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
