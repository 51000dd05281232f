use thiserror::Error;

/// Errors raised by model construction, fitting and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    Dimension(String),

    #[error("index {index} out of range (valid: {lo}..={hi})")]
    OutOfRange { index: usize, lo: usize, hi: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("size limit exceeded: {0}")]
    TooLarge(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::TooLarge(_) => 2,
            Error::Data(_) | Error::Dimension(_) | Error::OutOfRange { .. } | Error::Io { .. } => 3,
            Error::Numerical(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
