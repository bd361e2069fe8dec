//! Read-only documents served under `/views/{name}`. Each is a pure function
//! of a folded state, so a client that folds the stream itself can rebuild
//! the same document.

use std::collections::BTreeMap;
use std::str::FromStr;

use mdtroom_core::analysis::{
    build_provenance_index, check_convergence, compare_evidence, compute_hypothesis_flow,
    compute_round_summary, consensus_summary, item_flag, AnalysisError, Conflict,
    ConsensusSummary, ConvergenceStatus, EvidenceComparison, FlowEdge, ItemFlag, ProvenanceIndex,
    RoundSummary,
};
use mdtroom_core::debate::{HypothesisEntry, Round};
use mdtroom_core::ids::ItemId;
use mdtroom_core::store::SessionState;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewName {
    State,
    Round,
    Conflicts,
    Provenance,
    Flow,
    Consensus,
}

impl FromStr for ViewName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "state" => ViewName::State,
            "round" => ViewName::Round,
            "conflicts" => ViewName::Conflicts,
            "provenance" => ViewName::Provenance,
            "flow" => ViewName::Flow,
            "consensus" => ViewName::Consensus,
            other => return Err(format!("unknown view {other:?}")),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct RoundView<'a> {
    pub round: &'a Round,
    pub summary: RoundSummary,
    pub legend: &'a [HypothesisEntry],
}

#[derive(Debug, Serialize)]
pub struct ConflictsView<'a> {
    pub active: Vec<&'a Conflict>,
    pub resolved: Vec<&'a Conflict>,
    pub comparisons: Vec<EvidenceComparison>,
}

#[derive(Debug, Serialize)]
pub struct ProvenanceView {
    pub round_index: u32,
    pub badges: ProvenanceIndex,
    pub flags: BTreeMap<ItemId, ItemFlag>,
}

#[derive(Debug, Serialize)]
pub struct FlowView<'a> {
    pub edges: Vec<FlowEdge>,
    pub legend: &'a [HypothesisEntry],
}

#[derive(Debug, Serialize)]
pub struct ConsensusView {
    pub convergence: ConvergenceStatus,
    pub summary: ConsensusSummary,
}

fn to_value<T: Serialize>(doc: &T) -> serde_json::Value {
    serde_json::to_value(doc).expect("view documents serialize")
}

/// Builds view `name` from `state`. `round` selects the round for the round
/// and provenance views and defaults to the latest.
pub fn render_view(
    state: &SessionState,
    name: ViewName,
    round: Option<u32>,
) -> Result<serde_json::Value, AnalysisError> {
    let latest = || {
        state
            .rounds
            .len()
            .checked_sub(1)
            .map(|r| r as u32)
            .ok_or(AnalysisError::NoRounds)
    };
    Ok(match name {
        ViewName::State => to_value(state),
        ViewName::Round => {
            let r = match round {
                Some(r) => r,
                None => latest()?,
            };
            let summary = compute_round_summary(state, r)?;
            to_value(&RoundView {
                round: &state.rounds[r as usize],
                summary,
                legend: state.hypotheses.entries(),
            })
        }
        ViewName::Conflicts => {
            // conflict ids sort lexicographically
            let mut all: Vec<&Conflict> = state.conflicts.iter().collect();
            all.sort_by(|a, b| a.conflict_id.cmp(&b.conflict_id));
            let comparisons = all
                .iter()
                .map(|c| compare_evidence(state, &c.conflict_id))
                .collect::<Result<_, _>>()?;
            let (active, resolved) = all.into_iter().partition(|c| c.is_active());
            to_value(&ConflictsView {
                active,
                resolved,
                comparisons,
            })
        }
        ViewName::Provenance => {
            let r = match round {
                Some(r) => r,
                None => latest()?,
            };
            let badges = build_provenance_index(state, r)?;
            let flags = state
                .case
                .item_ids()
                .map(|i| (i.clone(), item_flag(state, i)))
                .collect();
            to_value(&ProvenanceView {
                round_index: r,
                badges,
                flags,
            })
        }
        ViewName::Flow => to_value(&FlowView {
            edges: compute_hypothesis_flow(state)?,
            legend: state.hypotheses.entries(),
        }),
        ViewName::Consensus => to_value(&ConsensusView {
            convergence: check_convergence(state)?,
            summary: consensus_summary(state)?,
        }),
    })
}
