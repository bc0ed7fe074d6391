use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the engine.
///
/// Variants are grouped by how a caller should report them: malformed input
/// (`Parse`, `EmptyInput`), references to things that do not exist
/// (`UnknownColumn`, `UnknownDimension`, `UnknownValue`, `UnknownGrouping`),
/// and contract violations on otherwise well-formed requests.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),

    #[error("unknown measure `{0}`")]
    UnknownMeasure(String),

    #[error("value `{value}` does not occur in dimension `{dimension}`")]
    UnknownValue { dimension: String, value: String },

    #[error("row {row}, column `{column}`: `{value}` is not a decimal number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("no roll-up on `{0}` in the operation chain")]
    UnknownGrouping(String),

    #[error("negative weight {weight} for tag `{term}`")]
    NegativeWeight { term: String, weight: f64 },

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid permalink: {0}")]
    Permalink(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
