//! Derived analytics over committed rounds. Everything here is a pure
//! function of session state.

mod conflict;
mod consensus;
mod evidence;
mod flow;
mod provenance;
mod summary;

use thiserror::Error;

use crate::ids::{ConflictId, ItemId};
use crate::store::StoreError;

pub use conflict::{
    apply_changes, detect_conflicts, ordered_pair, pair_findings, Conflict, ConflictChange,
    ConflictDelta, ConflictStatus, LifecycleEvent, LifecycleKind, PairFinding,
};
pub use consensus::{
    check_convergence, consensus_summary, convergence_of, ConsensusSummary, ConvergenceStatus,
};
pub use evidence::{
    compare_evidence, AgentEvidence, ComparisonRow, ComparisonSide, DivergenceKind,
    EvidenceComparison, EvidenceSnippet,
};
pub use flow::{compute_hypothesis_flow, FlowEdge, FlowNode};
pub use provenance::{
    build_provenance_index, item_badge_state, item_flag, ItemFlag, ProvenanceBadge,
    ProvenanceIndex,
};
pub use summary::{compute_round_summary, summarize_round, OpinionChange, RoundSummary};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("unknown round {0}")]
    UnknownRound(u32),
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("unknown conflict {0}")]
    UnknownConflict(ConflictId),
    #[error("hypothesis flow needs at least two committed rounds")]
    TooFewRounds,
    #[error("no committed rounds")]
    NoRounds,
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl AnalysisError {
    pub fn code(&self) -> &'static str {
        match self {
            AnalysisError::UnknownRound(_) => "UnknownRound",
            AnalysisError::UnknownItem(_) => "UnknownItem",
            AnalysisError::UnknownConflict(_) => "UnknownConflict",
            AnalysisError::TooFewRounds => "TooFewRounds",
            AnalysisError::NoRounds => "NoRounds",
            AnalysisError::Store(e) => e.code(),
        }
    }
}
