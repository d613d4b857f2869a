use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize a zero-length vector")]
    ZeroVector,

    #[error("vector must have at least 2 components, got {0}")]
    DimensionTooSmall(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("concentration must be finite and nonnegative, got {0}")]
    InvalidConcentration(f64),

    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("class index {index} out of range for {classes} classes")]
    InvalidClass { index: usize, classes: usize },

    #[error("prototype column for class {0} has zero norm")]
    ZeroPrototype(usize),

    #[error("penultimate activation has zero norm")]
    ZeroActivation,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic number in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("truncated IDX file {path}: expected {expected} bytes of payload, found {found}")]
    Truncated { path: PathBuf, expected: usize, found: usize },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("unsupported dimension {0}: this operation requires d = 2")]
    UnsupportedDimension(usize),

    #[error("malformed {kind} file {path}: {message}")]
    Format { kind: &'static str, path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(kind: &'static str, path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { kind, path: path.into(), message: message.into() }
    }
}
