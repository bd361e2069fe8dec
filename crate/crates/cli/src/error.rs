use mdtroom_core::debate::EngineError;
use mdtroom_core::store::StoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed input files, corrupt logs.
    #[error("{0}")]
    Invalid(String),
    #[error("transport failure: {0}")]
    Transport(String),
    /// The engine or the written log broke one of its own guarantees.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Transport(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::CorruptFile(_) | StoreError::OutOfRange(_) => CliError::Invalid(format!("{}: {e}", e.code())),
            other => CliError::Internal(format!("{}: {other}", other.code())),
        }
    }
}

/// Classifies an engine error raised outside a directive.
impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::TransportDown(msg) => CliError::Transport(msg),
            EngineError::InvalidCase(_)
            | EngineError::DuplicateAgent(_)
            | EngineError::TooFewAgents
            | EngineError::InvalidConfig(_) => CliError::Invalid(e.to_string()),
            other => CliError::Internal(format!("{}: {other}", other.code())),
        }
    }
}
