use thiserror::Error;

/// Errors raised by the library. Honest search failures (escalation cap,
/// Ramsey `NotFound`, infeasibility) are *not* errors; they are ordinary
/// results carried by the respective outcome types.
#[derive(Debug, Error)]
pub enum Error {
    /// A value or coordinate lies outside its space.
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A structured input document is malformed.
    #[error("invalid field `{field}`: {message}")]
    Format { field: String, message: String },
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
