//! Error type shared across the workbench.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is out of range or inconsistent; names the offending field.
    #[error("invalid parameter `{field}`: {message}")]
    Param { field: String, message: String },

    /// Not enough input to compute the requested quantity.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Feature schema or table shape does not match expectations.
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// A label is outside the accepted vocabulary.
    #[error("unknown label: {0}")]
    Vocabulary(String),

    /// A file is malformed (bad magic, truncated, unparsable row).
    #[error("format error: {0}")]
    Format(String),

    /// A referenced input path does not exist.
    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn param(field: &str, message: impl Into<String>) -> Self {
        Error::Param {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Stable machine-parsable kind tag, one per variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Param { .. } => "param",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Schema(_) => "schema",
            Error::Vocabulary(_) => "vocabulary",
            Error::Format(_) => "format",
            Error::MissingInput(_) => "missing_input",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code for the CLI; documented in the README.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingInput(_) => 3,
            Error::Schema(_) => 4,
            Error::Param { .. } => 5,
            Error::InsufficientData(_) => 6,
            Error::Format(_) => 7,
            Error::Vocabulary(_) => 8,
            Error::Io(_) => 9,
        }
    }
}
