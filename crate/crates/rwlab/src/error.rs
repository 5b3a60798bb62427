//! Crate-wide error type with a stable exit-code mapping for the CLI.

/// Errors produced by corpus ingestion, configuration, and training.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A dataset line could not be parsed as a record.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record parsed but violates the data-model invariants.
    #[error("invalid example at line {line} (sentence {sentence_id}): {message}")]
    InvalidExample {
        line: usize,
        sentence_id: String,
        message: String,
    },

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Training produced a non-finite quantity and was aborted.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An evaluation filter selected no examples.
    #[error("empty evaluation set for filter `{filter}`")]
    EmptySplit { filter: String },

    /// Runs with differing configurations were mixed into one aggregate.
    #[error("aggregate over mixed configurations: {0}")]
    MixedConfigs(String),

    /// A model checkpoint file is corrupt or has the wrong magic.
    #[error("bad checkpoint {path}: {message}")]
    BadCheckpoint { path: String, message: String },
}

impl Error {
    /// Process exit code for the CLI: 2 for input/configuration problems,
    /// 3 for numeric failures during training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
