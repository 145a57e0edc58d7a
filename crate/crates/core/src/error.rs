use std::path::PathBuf;

/// Every failure the engine can report.
///
/// Variants are grouped by the exit code the CLI maps them to: configuration
/// problems, data problems (parse/load), and numeric failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("checkpoint load failed: {0}")]
    Load(#[from] LoadError),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Reasons a checkpoint file can be rejected.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LoadError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u8, expected: u8 },
    #[error("file truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("header declares {declared} values but payload holds {actual}")]
    PayloadLength { declared: usize, actual: usize },
    #[error("malformed header: {0}")]
    Malformed(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Dimension(_) => 2,
            Error::Parse { .. } | Error::Empty(_) | Error::Load(_) | Error::Io { .. } => 3,
            Error::Numeric(_) | Error::Undefined(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
