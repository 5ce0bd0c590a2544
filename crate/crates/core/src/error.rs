use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the training pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: {what} has dimension {actual}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("no observations: {0}")]
    NoObservations(&'static str),

    /// The regularized Gram matrix could not be factored even after the
    /// largest jitter was added to its diagonal.
    #[error(
        "numerical failure: {size}x{size} system not positive definite after jitter {jitter:e} \
         (diagonal range [{min_diagonal:e}, {max_diagonal:e}])"
    )]
    NotPositiveDefinite {
        size: usize,
        jitter: f64,
        min_diagonal: f64,
        max_diagonal: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("class `{class}` has no instances in the {split} split")]
    EmptySplit { class: String, split: &'static str },

    #[error("classes lacking train or validation data: {}", .0.join(", "))]
    ClassesWithoutData(Vec<String>),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("run aborted at round {round}: {source}")]
    RunAborted {
        round: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 config error, 2 data error,
    /// 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => 1,
            Error::NotPositiveDefinite { .. } | Error::Numerical(_) => 3,
            Error::RunAborted { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
