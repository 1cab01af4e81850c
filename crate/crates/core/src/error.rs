use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library. Messages are single-line so the CLI can
/// surface them verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("item `{0}` has no observed scores")]
    EmptyItem(String),

    #[error("model `{0}` has no observed scores")]
    EmptyModel(String),

    #[error("degenerate score range: all values equal {0}")]
    DegenerateRange(f64),

    #[error("empty score matrix")]
    EmptyMatrix,

    #[error("score matrix needs at least {needed} {what}, found {found}")]
    TooSmall {
        what: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("score {value} for ({model}, {item}) is outside [0, 1]")]
    ScoreOutOfRange {
        model: String,
        item: String,
        value: f64,
    },

    #[error("item bank has no active items")]
    EmptyBank,

    #[error("item pool exhausted")]
    PoolExhausted,

    #[error("item `{0}` already administered")]
    AlreadyAdministered(String),

    #[error("item `{0}` is not in the bank")]
    UnknownItem(String),

    #[error("item `{0}` is inactive")]
    InactiveItem(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("duplicate {what} `{id}`")]
    Duplicate { what: &'static str, id: String },

    #[error("budget below warm-up cost: budget {budget}, warm-up needs {needed}")]
    BudgetBelowWarmup { budget: f64, needed: f64 },

    #[error("active bank has {available} items, need at least {needed}")]
    BankTooSmall { available: usize, needed: usize },

    #[error("incomplete matrix: {missing} missing cells, first ({model}, {item})")]
    Incomplete {
        missing: usize,
        model: String,
        item: String,
    },

    #[error("no score for ({model}, {item})")]
    MissingScore { model: String, item: String },

    #[error("model sets differ: {0}")]
    MismatchedIds(String),

    #[error("{0}")]
    Conformance(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: empty score file")]
    EmptyFile { path: PathBuf },

    #[error("{path}: schema error at {field}: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("{path}: unsupported format version {found}, expected {expected}")]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("live oracle: {0}")]
    Live(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
