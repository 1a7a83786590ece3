use std::path::PathBuf;

use regiondrag_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("image: {0}")]
    Image(String),

    #[error("{0}")]
    Usage(String),

    #[error("request timed out after {0} s")]
    Timeout(u64),
}

/// How a failure is reported to the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: unreadable files, malformed records, invalid parameters.
    Validation,
    /// Input decoded fine but its regions are unusable.
    Degenerate,
    /// The pipeline itself failed.
    Pipeline,
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(what: &'static str, message: impl ToString) -> Self {
        AppError::Format {
            what,
            message: message.to_string(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            AppError::Core(e) if e.is_degenerate_region() => ErrorClass::Degenerate,
            AppError::Core(e) if e.stage().is_some() || matches!(e, CoreError::Backend { .. }) => ErrorClass::Pipeline,
            AppError::Timeout(_) => ErrorClass::Pipeline,
            _ => ErrorClass::Validation,
        }
    }

    /// Pipeline stage that failed, if any.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            AppError::Core(e) => e.stage(),
            _ => None,
        }
    }

    /// 1 for bad input (including degenerate regions), 2 for pipeline failures.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Pipeline => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;
