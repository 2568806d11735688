use std::path::PathBuf;

/// Failures surfaced by the drivers and the command line.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Bad input: configuration, flags or data files.
    #[error("validation error: {0}")]
    Validation(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A computation that could not complete.
    #[error("numerical failure: {0}")]
    Numerical(#[from] hdclt_core::Error),
}

impl AppError {
    pub fn validation(msg: impl Into<String>) -> Self {
        AppError::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for input problems, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Validation(_) | AppError::Io { .. } => 2,
            AppError::Numerical(_) => 3,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
