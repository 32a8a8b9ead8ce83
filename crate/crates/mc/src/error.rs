use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("invalid simulation setup: {0}")]
    InvalidConfig(String),

    #[error("{functional}: {censored} of {paths} paths reached the horizon {horizon} before the stopping time")]
    HorizonTooShort { functional: &'static str, censored: u64, paths: u64, horizon: f64 },

    #[error("path {path} produced a non-finite or out-of-range state {x} at t = {t}")]
    NonFiniteState { path: u64, t: f64, x: f64 },

    #[error("thread pool: {0}")]
    ThreadPool(String),

    #[error(transparent)]
    Core(#[from] drawdown_core::Error),
}

impl McError {
    pub fn is_validation(&self) -> bool {
        match self {
            McError::InvalidConfig(_) => true,
            McError::Core(e) => e.is_validation(),
            _ => false,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            McError::InvalidConfig(_) => "InvalidConfig",
            McError::HorizonTooShort { .. } => "HorizonTooShort",
            McError::NonFiniteState { .. } => "NonFiniteState",
            McError::ThreadPool(_) => "ThreadPool",
            McError::Core(e) => e.kind(),
        }
    }
}

pub type Result<T> = std::result::Result<T, McError>;

pub(crate) fn invalid(msg: impl Into<String>) -> McError {
    McError::InvalidConfig(msg.into())
}
