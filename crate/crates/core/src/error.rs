use std::path::PathBuf;

use thiserror::Error;

use crate::geom::ApId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed document. `location` is a field path and/or line/column.
    #[error("parse error in {what} at {location}: {message}")]
    Parse {
        what: &'static str,
        location: String,
        message: String,
    },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient valid measurements: have {have}, need at least {need}")]
    InsufficientMeasurements { have: usize, need: usize },

    #[error("disconnected AP pair ({0}, {1}): no path within max order")]
    DisconnectedPair(ApId, ApId),

    #[error("invalid neighborhood table: {0}")]
    InvalidTable(String),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("n exceeds M: fixed:{n} requested but only {m} measurements available")]
    FixedNExceedsM { n: usize, m: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("sampling starved after {0} consecutive rejections")]
    SamplingStarved(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Maps a serde_json failure, keeping the offending field path.
    pub(crate) fn from_json(
        what: &'static str,
        err: serde_path_to_error::Error<serde_json::Error>,
    ) -> Self {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let location = if path.is_empty() || path == "." {
            format!("line {}, column {}", inner.line(), inner.column())
        } else {
            format!(
                "field `{}` (line {}, column {})",
                path,
                inner.line(),
                inner.column()
            )
        };
        Error::Parse {
            what,
            location,
            message: inner.to_string(),
        }
    }
}
