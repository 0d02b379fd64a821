//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Parse failure in the plain-text record format, with a 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A table row references an entity that does not exist.
    #[error("referential error at row {row}: {msg}")]
    Referential { row: usize, msg: String },

    /// Input violates a dataset invariant.
    #[error("invalid data: {0}")]
    Validation(String),

    /// Bad argument to an operation (e.g. a threshold below 2).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Estimation failure: rank deficiency, separation, non-convergence.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Invalid pipeline configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A pipeline stage failed; the stage name is preserved for reporting.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
