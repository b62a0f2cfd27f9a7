use thiserror::Error;

/// Rejected configuration or parameter set.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid {context} configuration: {reason}")]
pub struct ConfigError {
    pub context: &'static str,
    pub reason: String,
}

impl ConfigError {
    pub fn invalid(context: &'static str, reason: impl Into<String>) -> Self {
        Self { context, reason: reason.into() }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("step map produced a non-finite state (parameters too large for the step duration)")]
    NonFiniteResult,
}
