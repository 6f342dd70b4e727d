use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// The source had no header row at all.
    #[error("input is empty (no header row)")]
    EmptyInput,

    #[error("required column `{0}` not found in header")]
    MissingColumn(String),

    /// A mapped field failed to parse or violated a record invariant.
    /// `row` is the 1-based line number in the source (the header is row 1).
    #[error("row {row}, column `{column}`: {message}")]
    InvalidField {
        row: u64,
        column: String,
        message: String,
    },

    #[error("row {row}: malformed CSV: {message}")]
    MalformedRow { row: u64, message: String },

    /// A slice of the data that an operation needs is empty.
    #[error("empty slice: {0}")]
    EmptySlice(String),

    /// A quantity is undefined for the given data (zero denominator).
    #[error("undefined: {0}")]
    Undefined(String),

    /// Arguments outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Coarse classification used by front ends to pick exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io(_) => ErrorCategory::Io,
            Error::EmptyInput
            | Error::MissingColumn(_)
            | Error::InvalidField { .. }
            | Error::MalformedRow { .. } => ErrorCategory::Parse,
            Error::EmptySlice(_) | Error::Undefined(_) | Error::Domain(_) => {
                ErrorCategory::Degenerate
            }
            Error::Config(_) => ErrorCategory::Config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Io,
    Parse,
    Degenerate,
    Config,
}
