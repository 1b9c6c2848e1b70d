use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// A malformed line in one of the text formats (dataset, lexicon, embeddings, config, ...).
    #[error("{source_name}: line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("alignment error: {0}")]
    Alignment(String),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Short machine-readable code used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Parse { .. } => "parse",
            Error::Shape(_) => "shape",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Divergence(_) => "divergence",
            Error::ModelFormat(_) => "model-format",
            Error::Empty(_) => "empty-input",
            Error::MissingInput(_) => "missing-input",
            Error::Alignment(_) => "alignment",
        }
    }
}
