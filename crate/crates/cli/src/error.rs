use std::path::PathBuf;

/// Failures of the command-line layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A file could not be read or written.
    #[error("{}: {source}", path.display())]
    Io {
        /// Offending path.
        path: PathBuf,
        /// Underlying error.
        source: std::io::Error,
    },
    /// A row of an input file is malformed.
    #[error("{file}:{line}: {message}")]
    Parse {
        /// Input file name.
        file: String,
        /// 1-based line number.
        line: u64,
        /// What was wrong.
        message: String,
    },
    /// Arguments or inputs fail validation.
    #[error("{0}")]
    Invalid(String),
    /// Error raised by the numerical core.
    #[error(transparent)]
    Core(#[from] careerwalk::Error),
}

/// Result alias for this crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status: 1 for invalid input, 2 for failed computation.
    pub fn exit_code(&self) -> u8 {
        use careerwalk::Error as E;
        match self {
            Error::Core(E::NonFiniteLikelihood | E::NoValidCandidate | E::ZeroVariance) => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::Invalid(_) | Error::Core(_) => 1,
        }
    }

    pub(crate) fn parse(file: &str, line: u64, message: impl Into<String>) -> Self {
        Error::Parse { file: file.to_string(), line, message: message.into() }
    }
}
