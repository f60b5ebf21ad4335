use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("layout mismatch: {0}")]
    Layout(String),

    #[error("non-finite value written to parameter `{0}`")]
    NonFinite(String),

    #[error("stale tape: recorded at parameter version {tape}, network is at {current}")]
    StaleTape { tape: u64, current: u64 },

    #[error("replay buffer holds {have} transitions, need {need}")]
    InsufficientBuffer { have: usize, need: usize },

    #[error("value {value} outside [{min}, {max}] for {what}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("dataset format: {0}")]
    Dataset(String),

    #[error("episode {episode}, slot {slot}: {source}")]
    Slot {
        episode: u64,
        slot: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at_slot(self, episode: u64, slot: u64) -> Self {
        match self {
            e @ Error::Slot { .. } => e,
            other => Error::Slot {
                episode,
                slot,
                source: Box::new(other),
            },
        }
    }

    /// Validation failures map to exit code 1, everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::ConfigParse(_) | Error::ConfigInvalid { .. })
    }
}
