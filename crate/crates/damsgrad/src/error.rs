use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the optimizer, analysis, network, and benchmark layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Two paired lengths or shapes disagree (parameters vs gradient, cache vs net, ...).
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    /// A NaN or infinity showed up where only finite values are allowed.
    NonFinite { context: &'static str },
    /// Hyperparameter outside its documented range.
    InvalidHyperParams(String),
    /// An analysis operation was asked about a (beta2, beta3) regime it is not defined for.
    ModeError(String),
    /// A task, tuner, or run specification failed validation.
    InvalidSpec(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                context,
                expected,
                actual,
            } => write!(f, "{context}: expected length {expected}, got {actual}"),
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::InvalidHyperParams(msg) => write!(f, "invalid hyperparameters: {msg}"),
            Error::ModeError(msg) => write!(f, "mode error: {msg}"),
            Error::InvalidSpec(msg) => write!(f, "invalid specification: {msg}"),
        }
    }
}

impl std::error::Error for Error {}
