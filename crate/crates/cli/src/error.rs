use nnspin_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: CoreError,
    },

    #[error("missing dependency: {0}")]
    Dependency(String),

    #[error(
        "hash mismatch for {path}: manifest records {expected}, file has {actual} (rerun with --force to regenerate)"
    )]
    HashMismatch {
        path: String,
        expected: String,
        actual: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn stage(stage: impl Into<String>) -> impl FnOnce(CoreError) -> CliError {
        let stage = stage.into();
        move |source| CliError::Stage { stage, source }
    }

    pub fn io(path: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 0 ok, 2 usage/config, 3 convergence, 4 integration, 5 fit, 6 dependency.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Dependency(_) | CliError::HashMismatch { .. } | CliError::Io { .. } => 6,
            CliError::Stage { source, .. } => match source {
                CoreError::InvalidInput(_) => 2,
                CoreError::Convergence { .. } => 3,
                CoreError::Integration(_)
                | CoreError::NumericalFailure { .. }
                | CoreError::Singularity(_)
                | CoreError::InternalConsistency(_) => 4,
                CoreError::FitFailure { .. }
                | CoreError::NoPeaks { .. }
                | CoreError::InconsistentInput(_)
                | CoreError::SelectionFailure(_) => 5,
                CoreError::Format { .. } | CoreError::Io(_) | CoreError::Csv(_) | CoreError::Json(_) => 6,
            },
        }
    }
}
