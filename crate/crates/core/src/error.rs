use thiserror::Error;

/// Errors produced by the learner, the diagnostics and the file loaders.
#[derive(Debug, Error)]
pub enum SkgError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("unknown node id: {0}")]
    UnknownNode(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Argument,
    Data,
    Numeric,
}

impl SkgError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            SkgError::Argument(_) | SkgError::DimensionMismatch { .. } => ErrorKind::Argument,
            SkgError::Parse { .. }
            | SkgError::Validation(_)
            | SkgError::UnknownNode(_)
            | SkgError::Io(_)
            | SkgError::Json(_) => ErrorKind::Data,
            SkgError::Degenerate(_) | SkgError::Numeric(_) | SkgError::Domain(_) | SkgError::State(_) => {
                ErrorKind::Numeric
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, SkgError>;

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(SkgError::DimensionMismatch { expected, got })
    }
}
