use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid architecture, shapes, or run parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violating a precondition (out-of-range samples, codes, frequencies).
    #[error("data error: {0}")]
    Data(String),

    /// API misuse, e.g. calling backward on a non-scalar.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("measurement error: {0}")]
    Measurement(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step} (learning rate {learning_rate}): loss = {loss}")]
    Diverged {
        step: usize,
        learning_rate: f64,
        loss: f64,
    },

    /// Malformed or truncated file content at a byte offset.
    #[error("format error in {path} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("checkpoint version mismatch in {path}: found {found}, expected {expected}")]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Usage(_) => "usage",
            Error::Measurement(_) => "measurement",
            Error::Diverged { .. } => "diverged",
            Error::Format { .. } => "format",
            Error::Version { .. } => "version",
            Error::Io { .. } => "io",
        }
    }
}
