use std::path::Path;

use sketchedit_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{context}: bad format at byte {offset}: {msg}")]
    Format { context: String, offset: u64, msg: String },
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, AppError>;

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io { path: path.display().to_string(), source }
    }

    pub fn format(context: impl Into<String>, offset: u64, msg: impl Into<String>) -> Self {
        AppError::Format { context: context.into(), offset, msg: msg.into() }
    }

    /// Failure class used for the CLI diagnostic and exit code.
    pub fn class(&self) -> (&'static str, i32) {
        match self {
            AppError::Io { .. } => ("io", 3),
            AppError::Format { .. } => ("format", 4),
            AppError::Core(CoreError::Shape { .. }) | AppError::Core(CoreError::InvalidArgument(_)) | AppError::Core(CoreError::NoPupil) => ("shape", 5),
            AppError::Core(CoreError::NonFinite { .. }) => ("nan", 6),
            AppError::Core(CoreError::ConfigMismatch(_)) | AppError::Config(_) => ("config", 7),
        }
    }
}
