use gpod_core::Error as CoreError;

/// Process exit status for each failure class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Numerical = 3,
}

#[derive(Debug, thiserror::Error)]
#[error("{stage}: {message}")]
pub struct CliError {
    pub kind: ExitKind,
    pub stage: String,
    pub message: String,
}

impl CliError {
    pub fn usage(stage: &str, message: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Usage,
            stage: stage.into(),
            message: message.into(),
        }
    }

    pub fn data(stage: &str, message: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Data,
            stage: stage.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }
}

pub fn kind_of(e: &CoreError) -> ExitKind {
    match e {
        CoreError::Parameter(_) | CoreError::Config(_) => ExitKind::Usage,
        CoreError::Input(_)
        | CoreError::Size(_)
        | CoreError::Parse { .. }
        | CoreError::Io(_)
        | CoreError::Serde(_) => ExitKind::Data,
        CoreError::DegenerateGraph(_) | CoreError::EigenNonConvergence { .. } | CoreError::Numerical(_) => {
            ExitKind::Numerical
        }
    }
}

/// Attaches the pipeline stage to a library error.
pub trait Stage<T> {
    fn stage(self, stage: &str) -> Result<T, CliError>;
}

impl<T> Stage<T> for Result<T, CoreError> {
    fn stage(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError {
            kind: kind_of(&e),
            stage: stage.into(),
            message: e.to_string(),
        })
    }
}

impl<T> Stage<T> for std::io::Result<T> {
    fn stage(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::data(stage, e.to_string()))
    }
}
