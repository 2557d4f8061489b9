use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("label index {index} out of range for vocabulary of size {size}")]
    LabelIndex { index: usize, size: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("{metric}: row {row} {reason}")]
    InvalidRow {
        metric: &'static str,
        row: usize,
        reason: &'static str,
    },

    #[error("zero centered norm for {0}")]
    ZeroCenteredNorm(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Format(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable tag used as the machine-readable prefix of CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownLabel(_) | Error::LabelIndex { .. } => "label",
            Error::Empty(_) => "empty",
            Error::InvalidParameter(_) => "param",
            Error::ShapeMismatch { .. } => "shape",
            Error::NonFinite(_) => "nonfinite",
            Error::Divergence { .. } => "divergence",
            Error::InvalidRow { .. } => "row",
            Error::ZeroCenteredNorm(_) => "proximity",
            Error::Parse { .. } | Error::Format(_) | Error::Json(_) => "format",
            Error::File { .. } | Error::Io(_) => "io",
        }
    }

    pub(crate) fn shape(context: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}

/// `std::fs` wrappers whose errors name the offending path.
pub(crate) mod fsx {
    use std::fs;
    use std::path::Path;

    use super::{Error, Result};

    fn wrap(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::File {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn read_to_string(path: impl AsRef<Path>) -> Result<String> {
        let path = path.as_ref();
        fs::read_to_string(path).map_err(wrap(path))
    }

    pub(crate) fn write(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, contents).map_err(wrap(path))
    }

    pub(crate) fn create_dir_all(path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::create_dir_all(path).map_err(wrap(path))
    }

    pub(crate) fn open(path: impl AsRef<Path>) -> Result<fs::File> {
        let path = path.as_ref();
        fs::File::open(path).map_err(wrap(path))
    }

    pub(crate) fn create(path: impl AsRef<Path>) -> Result<fs::File> {
        let path = path.as_ref();
        fs::File::create(path).map_err(wrap(path))
    }
}
