//! Append-only event log: the single source of truth for a session.

mod event;
mod file;
mod log;
mod state;

use thiserror::Error;

pub use event::{Event, EventBody, EVENT_SCHEMA_VERSION};
pub use file::{
    decode_log, encode_event_line, encode_log, load_session, save_session, EventSink, LogWriter,
    LOG_EXTENSION, LOG_MAGIC,
};
pub use log::{EventLog, FoldTarget, ReplayReport};
pub use state::{CommitOutcome, Divergence, FoldMode, PendingRound, Replayer, SessionState};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("illegal event: {0}")]
    IllegalEvent(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("corrupt log file: {0}")]
    CorruptFile(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("recorded analytics diverge at seq {seq}: {detail}")]
    Divergence { seq: u64, detail: String },
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::IllegalEvent(_) => "IllegalEvent",
            StoreError::StorageFailure(_) => "StorageFailure",
            StoreError::CorruptFile(_) => "CorruptFile",
            StoreError::OutOfRange(_) => "OutOfRange",
            StoreError::Divergence { .. } => "Divergence",
        }
    }
}
