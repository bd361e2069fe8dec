use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::ids::HypothesisId;
use crate::store::SessionState;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowNode {
    pub round_index: u32,
    pub hypothesis_id: HypothesisId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub from: FlowNode,
    pub to: FlowNode,
    pub weight: u32,
}

/// Per-agent hypothesis transitions between consecutive rounds. Agents
/// absent from either round (muted, or never accepted) are skipped.
pub fn compute_hypothesis_flow(state: &SessionState) -> Result<Vec<FlowEdge>, AnalysisError> {
    if state.rounds.len() < 2 {
        return Err(AnalysisError::TooFewRounds);
    }
    let mut weights: BTreeMap<(FlowNode, FlowNode), u32> = BTreeMap::new();
    for pair in state.rounds.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        for o in &prev.opinions {
            let Some(later) = next.opinion(&o.agent_id) else { continue };
            let from = FlowNode {
                round_index: prev.round_index,
                hypothesis_id: o.hypothesis_id.clone(),
            };
            let to = FlowNode {
                round_index: next.round_index,
                hypothesis_id: later.hypothesis_id.clone(),
            };
            *weights.entry((from, to)).or_insert(0) += 1;
        }
    }
    Ok(weights
        .into_iter()
        .map(|((from, to), weight)| FlowEdge { from, to, weight })
        .collect())
}
