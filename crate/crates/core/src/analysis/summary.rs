use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, ConflictDelta};
use crate::debate::Round;
use crate::ids::{AgentId, HypothesisId};
use crate::store::SessionState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpinionChange {
    pub agent_id: AgentId,
    pub from_hypothesis: HypothesisId,
    pub to_hypothesis: HypothesisId,
}

/// Data behind one round card: support distribution plus change badges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round_index: u32,
    pub support: BTreeMap<HypothesisId, u32>,
    pub new_conflicts: u32,
    pub resolved_conflicts: u32,
    pub opinion_changes: Vec<OpinionChange>,
}

/// Support counts every present opinion; only fresh statements count as
/// opinion changes, so a carried-forward switch is not reported twice.
pub fn summarize_round(round: &Round, delta: &ConflictDelta) -> RoundSummary {
    let mut support = BTreeMap::new();
    for o in &round.opinions {
        *support.entry(o.hypothesis_id.clone()).or_insert(0) += 1;
    }
    let opinion_changes = round
        .opinions
        .iter()
        .filter(|o| !o.carried_forward)
        .filter_map(|o| {
            o.changed_from.as_ref().map(|from| OpinionChange {
                agent_id: o.agent_id.clone(),
                from_hypothesis: from.clone(),
                to_hypothesis: o.hypothesis_id.clone(),
            })
        })
        .collect();
    RoundSummary {
        round_index: round.round_index,
        support,
        new_conflicts: delta.opened.len() as u32,
        resolved_conflicts: delta.resolved.len() as u32,
        opinion_changes,
    }
}

pub fn compute_round_summary(
    state: &SessionState,
    round_index: u32,
) -> Result<RoundSummary, AnalysisError> {
    let i = round_index as usize;
    let round = state
        .rounds
        .get(i)
        .ok_or(AnalysisError::UnknownRound(round_index))?;
    Ok(summarize_round(round, &state.round_deltas[i]))
}
