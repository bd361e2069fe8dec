use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::debate::EvidenceSource;
use crate::ids::{AgentId, ConflictId, EvidenceId, HypothesisId, ItemId};
use crate::store::SessionState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DivergenceKind {
    DifferentEvidence,
    SameEvidenceDifferentReading,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSnippet {
    pub evidence_id: EvidenceId,
    pub source_type: EvidenceSource,
    pub citation: String,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentEvidence {
    pub agent_id: AgentId,
    pub evidence: Vec<EvidenceSnippet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonSide {
    pub hypothesis_id: HypothesisId,
    pub agents: Vec<AgentEvidence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub item_id: ItemId,
    pub side_a: ComparisonSide,
    pub side_b: ComparisonSide,
    pub divergence_kind: DivergenceKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceComparison {
    pub conflict_id: ConflictId,
    /// Round whose opinions were compared: the latest round for an active
    /// conflict, the last round before resolution otherwise.
    pub reference_round: u32,
    pub rows: Vec<ComparisonRow>,
}

/// Side-by-side evidence use for each contested item of a conflict.
pub fn compare_evidence(
    state: &SessionState,
    conflict_id: &ConflictId,
) -> Result<EvidenceComparison, AnalysisError> {
    let conflict = state
        .conflict(conflict_id)
        .ok_or_else(|| AnalysisError::UnknownConflict(conflict_id.clone()))?;
    let latest = state.rounds.len().saturating_sub(1) as u32;
    let reference_round = match conflict.resolved_round() {
        Some(r) => r.saturating_sub(1).max(conflict.opened_round()),
        None => latest,
    };
    let round = state
        .rounds
        .get(reference_round as usize)
        .ok_or(AnalysisError::UnknownRound(reference_round))?;

    let side = |hypothesis: &HypothesisId, item: &ItemId| ComparisonSide {
        hypothesis_id: hypothesis.clone(),
        agents: round
            .opinions
            .iter()
            .filter(|o| {
                conflict.involved_agents.contains(&o.agent_id)
                    && &o.hypothesis_id == hypothesis
                    && o.cited_item_ids().contains(item)
            })
            .map(|o| AgentEvidence {
                agent_id: o.agent_id.clone(),
                evidence: o
                    .evidence_for_item(item)
                    .into_iter()
                    .map(|e| EvidenceSnippet {
                        evidence_id: e.evidence_id.clone(),
                        source_type: e.source_type,
                        citation: e.citation.clone(),
                        snippet: e.snippet.clone(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let citations = |s: &ComparisonSide| -> BTreeSet<String> {
        s.agents
            .iter()
            .flat_map(|a| a.evidence.iter().map(|e| e.citation.clone()))
            .collect()
    };

    let [ha, hb] = &conflict.hypothesis_pair;
    let rows = conflict
        .contested_item_ids
        .iter()
        .map(|item| {
            let side_a = side(ha, item);
            let side_b = side(hb, item);
            let divergence_kind = if citations(&side_a).is_disjoint(&citations(&side_b)) {
                DivergenceKind::DifferentEvidence
            } else {
                DivergenceKind::SameEvidenceDifferentReading
            };
            ComparisonRow {
                item_id: item.clone(),
                side_a,
                side_b,
                divergence_kind,
            }
        })
        .collect();
    Ok(EvidenceComparison {
        conflict_id: conflict_id.clone(),
        reference_round,
        rows,
    })
}
