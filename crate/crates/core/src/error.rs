use std::path::PathBuf;

use crate::panel::DayIndex;

/// A single malformed input row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// 1-based line number in the source file (header is line 1).
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("{}: format error: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}: {} malformed row(s); first: {}", path.display(), errors.len(), errors.first().map(|e| e.to_string()).unwrap_or_default())]
    Rows { path: PathBuf, errors: Vec<RowError> },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("feature assembly failed: {0}")]
    Assembly(String),

    #[error("insufficient history for target day {}: no training rows", t_star.0)]
    InsufficientHistory { t_star: DayIndex },

    #[error("degenerate node: {0}")]
    DegenerateNode(String),

    #[error("cannot fit forest: {0}")]
    Unfit(String),

    #[error("query has no forest support")]
    NoSupport,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no forecast: {0}")]
    NoForecast(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
