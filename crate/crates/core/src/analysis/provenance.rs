use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::ids::{AgentId, EvidenceId, HypothesisId, ItemId};
use crate::store::{EventLog, FoldTarget, SessionState};

/// Which agent relied on an item, for which hypothesis, with which evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceBadge {
    pub item_id: ItemId,
    pub agent_id: AgentId,
    pub hypothesis_id: HypothesisId,
    pub round_index: u32,
    pub evidence_ids: BTreeSet<EvidenceId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ItemFlag {
    None,
    Conflict,
    Resolved,
}

pub type ProvenanceIndex = BTreeMap<ItemId, Vec<ProvenanceBadge>>;

/// Latest badge per (item, agent) over rounds `0..=round_index`, badges
/// ordered by agent color index.
pub fn build_provenance_index(
    state: &SessionState,
    round_index: u32,
) -> Result<ProvenanceIndex, AnalysisError> {
    let upto = round_index as usize;
    if upto >= state.rounds.len() {
        return Err(AnalysisError::UnknownRound(round_index));
    }
    let mut latest: BTreeMap<(ItemId, AgentId), ProvenanceBadge> = BTreeMap::new();
    for round in &state.rounds[..=upto] {
        for o in &round.opinions {
            for item in o.cited_item_ids() {
                let evidence_ids = o
                    .evidence_for_item(&item)
                    .into_iter()
                    .map(|e| e.evidence_id.clone())
                    .collect();
                latest.insert(
                    (item.clone(), o.agent_id.clone()),
                    ProvenanceBadge {
                        item_id: item,
                        agent_id: o.agent_id.clone(),
                        hypothesis_id: o.hypothesis_id.clone(),
                        round_index: o.round_index,
                        evidence_ids,
                    },
                );
            }
        }
    }
    let color = |agent: &AgentId| {
        state
            .agents
            .iter()
            .find(|a| &a.agent_id == agent)
            .map_or(u32::MAX, |a| a.color_index)
    };
    let mut index: ProvenanceIndex = state
        .case
        .items
        .iter()
        .map(|i| (i.id.clone(), Vec::new()))
        .collect();
    for ((item, _), badge) in latest {
        index.entry(item).or_default().push(badge);
    }
    for badges in index.values_mut() {
        badges.sort_by(|a, b| {
            color(&a.agent_id)
                .cmp(&color(&b.agent_id))
                .then_with(|| a.agent_id.cmp(&b.agent_id))
        });
    }
    Ok(index)
}

/// Flag for `item` given the conflict store held by `state`.
pub fn item_flag(state: &SessionState, item: &ItemId) -> ItemFlag {
    let mut ever = false;
    for c in &state.conflicts {
        if c.contested_item_ids.contains(item) {
            if c.is_active() {
                return ItemFlag::Conflict;
            }
            ever = true;
        }
    }
    if ever {
        ItemFlag::Resolved
    } else {
        ItemFlag::None
    }
}

/// Badges and flag of `item` as the session stood at the end of `round_index`.
pub fn item_badge_state(
    log: &EventLog,
    item: &ItemId,
    round_index: u32,
) -> Result<(Vec<ProvenanceBadge>, ItemFlag), AnalysisError> {
    let state = log.fold_state(FoldTarget::RoundBoundary(round_index))?;
    if !state.case.contains(item) {
        return Err(AnalysisError::UnknownItem(item.clone()));
    }
    let mut index = build_provenance_index(&state, round_index)?;
    let badges = index.remove(item).unwrap_or_default();
    Ok((badges, item_flag(&state, item)))
}
