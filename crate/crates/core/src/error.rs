use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures while decoding an IDX stream. Each malformation has its own variant.
#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad IDX magic for {what}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        what: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("truncated IDX {what} stream: {detail}")]
    Truncated { what: &'static str, detail: String },
    #[error("IDX count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: cannot decode image: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("image size mismatch: {expected:?} vs {found:?}")]
    SizeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed Omniglot run layout at {path}: {detail}")]
    Layout { path: PathBuf, detail: String },

    #[error("solver diverged at stage {stage}, iteration {iteration}: objective {objective}")]
    Diverged {
        stage: usize,
        iteration: usize,
        objective: f64,
    },

    #[error("distance ({test}, {train}): {source}")]
    Pair {
        test: usize,
        train: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in the optimizer rather than in inputs.
    pub fn is_solver(&self) -> bool {
        match self {
            Error::Diverged { .. } => true,
            Error::Pair { source, .. } => source.is_solver(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Decode { .. } | Error::Idx(_) | Error::Layout { .. } => true,
            Error::Pair { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
