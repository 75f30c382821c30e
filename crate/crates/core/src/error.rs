use thiserror::Error;

/// Errors raised by the simulator and protocol layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented range.
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("config document could not be parsed: {0}")]
    ConfigParse(String),

    /// A numeric argument outside the function's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("test already pending for agent {0}")]
    DuplicateTest(u32),

    #[error("malformed public key")]
    MalformedKey,

    #[error("decryption failed")]
    Decrypt,

    #[error("malformed wire data: {0}")]
    Wire(String),

    #[error("mailbox post rejected: daily quota of {quota} exhausted for sender")]
    Throttled { quota: u32 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config { field, reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
