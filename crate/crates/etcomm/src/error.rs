use std::path::{Path, PathBuf};

pub type AppResult<T> = Result<T, AppError>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("cannot parse configuration: {0}")]
    ConfigParse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("analysis: {0}")]
    Analysis(String),
    #[error(transparent)]
    Core(#[from] etcomm_core::Error),
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl ToString) -> Self {
        AppError::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 2 for configuration problems, 3 when training
    /// diverged, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config { .. } | AppError::ConfigParse(_) => 2,
            AppError::Core(etcomm_core::Error::Diverged { .. })
            | AppError::Core(etcomm_core::Error::NonFiniteGradient { .. }) => 3,
            _ => 1,
        }
    }
}
