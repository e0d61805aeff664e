use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NumericDomain(&'static str),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("channel `{0}` is mapped but missing from the record")]
    MissingChannel(String),

    #[error("invalid grid mapping: {0}")]
    Mapping(String),

    #[error("AUC undefined for class {class}: {reason}")]
    UndefinedAuc { class: usize, reason: &'static str },

    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable short tag used by the CLI's error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::NumericDomain(_) => "numeric",
            Error::Domain(_) => "domain",
            Error::EmptyInput(_) => "empty",
            Error::Index(_) => "index",
            Error::Config(_) => "config",
            Error::Divergence { .. } => "divergence",
            Error::MissingChannel(_) => "missing-channel",
            Error::Mapping(_) => "mapping",
            Error::UndefinedAuc { .. } => "undefined-auc",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
