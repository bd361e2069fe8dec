use thiserror::Error;

use super::Phase;
use crate::case::{CaseError, ValidationReport};
use crate::ids::{AgentId, ConflictId, ItemId};
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid case: {0}")]
    InvalidCase(ValidationReport),
    #[error("duplicate agent {0}")]
    DuplicateAgent(AgentId),
    #[error("a debate needs at least two agents")]
    TooFewAgents,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("operation not allowed in phase {0}")]
    WrongPhase(Phase),
    #[error("debate round budget exhausted")]
    RoundBudgetExhausted,
    #[error("agent transport down: {0}")]
    TransportDown(String),
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("agent {0} is muted")]
    MutedAgent(AgentId),
    #[error("no target agents")]
    EmptyTargets,
    #[error("no items selected")]
    EmptySelection,
    #[error("instruction must not be empty")]
    EmptyInstruction,
    #[error("unknown conflict {0}")]
    UnknownConflict(ConflictId),
    #[error("conflict {0} already resolved")]
    ConflictAlreadyResolved(ConflictId),
    #[error("illegal transition: {0}")]
    IllegalTransition(String),
    #[error("no committed rounds")]
    NoRounds,
    #[error("item {0} is cited by a committed opinion")]
    ItemInUse(ItemId),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl EngineError {
    /// Stable machine-readable code, used by the service error body.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::InvalidCase(_) => "InvalidCase",
            EngineError::DuplicateAgent(_) => "DuplicateAgent",
            EngineError::TooFewAgents => "TooFewAgents",
            EngineError::InvalidConfig(_) => "InvalidConfig",
            EngineError::WrongPhase(_) => "WrongPhase",
            EngineError::RoundBudgetExhausted => "RoundBudgetExhausted",
            EngineError::TransportDown(_) => "TransportDown",
            EngineError::UnknownItem(_) => "UnknownItem",
            EngineError::UnknownAgent(_) => "UnknownAgent",
            EngineError::MutedAgent(_) => "MutedAgent",
            EngineError::EmptyTargets => "EmptyTargets",
            EngineError::EmptySelection => "EmptySelection",
            EngineError::EmptyInstruction => "EmptyInstruction",
            EngineError::UnknownConflict(_) => "UnknownConflict",
            EngineError::ConflictAlreadyResolved(_) => "ConflictAlreadyResolved",
            EngineError::IllegalTransition(_) => "IllegalTransition",
            EngineError::NoRounds => "NoRounds",
            EngineError::ItemInUse(_) => "ItemInUse",
            EngineError::Case(CaseError::UnknownItem(_)) => "UnknownItem",
            EngineError::Case(CaseError::InvalidCategory(_)) => "InvalidCategory",
            EngineError::Case(CaseError::EmptyLabel) => "EmptyLabel",
            EngineError::Store(e) => e.code(),
        }
    }
}
