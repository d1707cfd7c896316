use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A configuration field violates its invariant.
    #[error("invalid `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("missing config key `{0}`")]
    MissingKey(String),
    #[error("config line {line}: {reason}")]
    Parse { line: usize, reason: String },
    /// An argument lies outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// The modulator gain would diverge.
    #[error("degenerate modulator state: {0}")]
    Degenerate(String),
    /// A closed-form approximation was requested outside its validity range.
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
}

impl Error {
    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(reason: impl Into<String>) -> Self {
        Error::Domain(reason.into())
    }
}
