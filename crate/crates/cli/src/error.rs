use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, keys or configuration values.
    #[error("usage: {0}")]
    Usage(String),
    /// Unreadable or malformed input data.
    #[error("data error in stage {stage}: {message}")]
    Data { stage: &'static str, message: String },
    /// A library invariant failed or training produced non-finite values.
    #[error("internal error in stage {stage}: {message}")]
    Internal { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data { .. } => 2,
            CliError::Internal { .. } => 3,
        }
    }

    pub fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }

    pub fn data(stage: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Data {
            stage,
            message: e.to_string(),
        }
    }

    pub fn internal(stage: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Internal {
            stage,
            message: e.to_string(),
        }
    }

    /// Classifies a library error raised while executing `stage`.
    pub fn stage(stage: &'static str) -> impl Fn(mltc::Error) -> Self {
        move |e| match e {
            mltc::Error::Invariant(_) | mltc::Error::NonFinite(_) | mltc::Error::Checkpoint(_) => {
                CliError::internal(stage, e)
            }
            _ => CliError::data(stage, e),
        }
    }
}
