use thiserror::Error;

/// Error type shared across the crate.
///
/// Variants carry enough named context (operation, offending key/field, file
/// position) that a CLI user can act on the message without a stack trace.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{op}: invalid argument: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("tensor file '{path}': {detail}")]
    TensorFormat { path: String, detail: String },

    #[error("manifest '{path}' line {line}: {detail}")]
    Manifest {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("config key '{key}': {detail}")]
    Config { key: String, detail: String },

    #[error("checkpoint '{path}': {detail}")]
    Checkpoint { path: String, detail: String },

    #[error("training diverged at epoch {epoch} step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("gradcheck: {0}")]
    GradCheck(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
