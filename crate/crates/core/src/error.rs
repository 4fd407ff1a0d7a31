use thiserror::Error;

/// Errors raised by model construction and the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdkError {
    /// The model or problem violates one or more invariants.
    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration document could not be read or parsed.
    #[error("config error: {0}")]
    Config(String),

    /// Root finding, bracketing or bisection did not converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl PdkError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        PdkError::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        PdkError::Numerical(msg.into())
    }

    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, PdkError::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, PdkError>;
