use std::path::PathBuf;

/// Errors raised across the crate.
///
/// The variants map onto the process exit codes of the command-line tool:
/// validation failures, I/O failures and numeric failures.
#[derive(Debug, thiserror::Error)]
pub enum RacError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl RacError {
    pub fn validation(msg: impl Into<String>) -> Self {
        RacError::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RacError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            RacError::Validation(_) | RacError::Parse { .. } => 1,
            RacError::Io { .. } | RacError::Image { .. } => 2,
            RacError::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, RacError>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(RacError::Validation(msg()))
    }
}
