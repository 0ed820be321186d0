use bttt_core::az::TrainError;
use bttt_core::harness::HarnessError;

/// Process exit codes.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_MISSING_CHECKPOINT: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{0}")]
    MissingCheckpoint(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::MissingCheckpoint(_) => EXIT_MISSING_CHECKPOINT,
            CliError::Failed(_) => EXIT_FAILURE,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        let msg = e.to_string();
        match e {
            HarnessError::UnknownAgent { .. }
            | HarnessError::Config(_)
            | HarnessError::BadRow { .. } => CliError::Config(msg),
            HarnessError::MissingCheckpoint(_) => CliError::MissingCheckpoint(msg),
            HarnessError::Checkpoint { .. } | HarnessError::Csv(_) | HarnessError::Io(_) => {
                CliError::Io(msg)
            }
            HarnessError::AgentFailure { .. } => CliError::Failed(msg),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let msg = e.to_string();
        match e {
            TrainError::Config(_) => CliError::Config(msg),
            TrainError::Io { .. } | TrainError::Network { .. } => CliError::Io(msg),
            TrainError::Agent(_) => CliError::Failed(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
