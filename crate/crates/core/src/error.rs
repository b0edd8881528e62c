use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulator, dataset and model pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("deployment must contain at least one base station")]
    EmptyDeployment,

    #[error("invalid area {width} x {height}: both sides must be positive")]
    InvalidArea { width: f64, height: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("id {id} outside vocabulary 1..={vocab}{context}")]
    Vocabulary {
        id: u32,
        vocab: usize,
        context: String,
    },

    #[error("cannot split {0} window(s): at least 2 are required")]
    Split(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("forward cache does not match the current model parameters")]
    Cache,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable short name used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyDeployment => "EmptyDeployment",
            Error::InvalidArea { .. } => "InvalidArea",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Vocabulary { .. } => "VocabularyError",
            Error::Split(_) => "SplitError",
            Error::Parse { .. } => "ParseError",
            Error::Shape(_) => "ShapeError",
            Error::Cache => "CacheError",
            Error::EmptyDataset => "EmptyDatasetError",
            Error::TaskMismatch(_) => "TaskMismatchError",
            Error::Usage(_) => "UsageError",
            Error::ModelFormat(_) => "ModelFormatError",
            Error::Io { .. } => "IoError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches file context to vocabulary and parse errors.
    pub fn with_file(self, path: &std::path::Path) -> Self {
        match self {
            Error::Vocabulary { id, vocab, context } => Error::Vocabulary {
                id,
                vocab,
                context: format!("{context} (in {})", path.display()),
            },
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{message} (in {})", path.display()),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
