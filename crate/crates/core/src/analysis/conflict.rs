//! Conflict detection and lifecycle tracking.
//!
//! Two present agents are in conflict at a round when they hold different
//! hypotheses while citing at least one common item. Conflicts are keyed by
//! the unordered hypothesis pair: every agent pair splitting the same two
//! hypotheses folds into one conflict.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::debate::Round;
use crate::ids::{AgentId, ConflictId, HypothesisId, ItemId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConflictStatus {
    Active,
    Resolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LifecycleKind {
    Opened,
    AgentJoined,
    StanceChanged,
    ReEvalRequested,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleEvent {
    pub kind: LifecycleKind,
    pub round_index: u32,
    pub detail: String,
}

impl LifecycleEvent {
    fn new(kind: LifecycleKind, round_index: u32, detail: impl Into<String>) -> Self {
        LifecycleEvent {
            kind,
            round_index,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub conflict_id: ConflictId,
    /// Sorted pair of distinct hypotheses.
    pub hypothesis_pair: [HypothesisId; 2],
    pub involved_agents: BTreeSet<AgentId>,
    pub contested_item_ids: BTreeSet<ItemId>,
    pub status: ConflictStatus,
    pub lifecycle: Vec<LifecycleEvent>,
    pub supersedes: Option<ConflictId>,
}

impl Conflict {
    pub fn is_active(&self) -> bool {
        self.status == ConflictStatus::Active
    }

    pub fn opened_round(&self) -> u32 {
        self.lifecycle.first().map_or(0, |e| e.round_index)
    }

    pub fn resolved_round(&self) -> Option<u32> {
        self.lifecycle
            .last()
            .filter(|e| e.kind == LifecycleKind::Resolved)
            .map(|e| e.round_index)
    }

    pub(crate) fn record_reeval(&mut self, round_index: u32) {
        self.lifecycle.push(LifecycleEvent::new(
            LifecycleKind::ReEvalRequested,
            round_index,
            "re-evaluation requested",
        ));
    }
}

/// One recorded change to the conflict store, carrying the conflict as it
/// stands after the change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "change", content = "conflict")]
pub enum ConflictChange {
    Opened(Conflict),
    Updated(Conflict),
    Resolved(Conflict),
}

impl ConflictChange {
    pub fn conflict(&self) -> &Conflict {
        match self {
            ConflictChange::Opened(c) | ConflictChange::Updated(c) | ConflictChange::Resolved(c) => c,
        }
    }
}

/// Ids touched by one round's detection pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictDelta {
    pub opened: Vec<ConflictId>,
    pub updated: Vec<ConflictId>,
    pub resolved: Vec<ConflictId>,
}

impl ConflictDelta {
    pub fn from_changes(changes: &[ConflictChange]) -> Self {
        let mut delta = ConflictDelta::default();
        for change in changes {
            let id = change.conflict().conflict_id.clone();
            match change {
                ConflictChange::Opened(_) => delta.opened.push(id),
                ConflictChange::Updated(_) => delta.updated.push(id),
                ConflictChange::Resolved(_) => delta.resolved.push(id),
            }
        }
        delta
    }
}

/// Agents and shared items behind one hypothesis pair at one round.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairFinding {
    pub agents: BTreeSet<AgentId>,
    pub items: BTreeSet<ItemId>,
}

pub fn ordered_pair(a: &HypothesisId, b: &HypothesisId) -> [HypothesisId; 2] {
    if a <= b {
        [a.clone(), b.clone()]
    } else {
        [b.clone(), a.clone()]
    }
}

/// Evaluates the detection predicate over every agent pair of `round`.
pub fn pair_findings(round: &Round) -> BTreeMap<[HypothesisId; 2], PairFinding> {
    let cited: Vec<_> = round
        .opinions
        .iter()
        .map(|o| (o, o.cited_item_ids()))
        .collect();
    let mut findings: BTreeMap<[HypothesisId; 2], PairFinding> = BTreeMap::new();
    for (i, (a, a_items)) in cited.iter().enumerate() {
        for (b, b_items) in &cited[i + 1..] {
            if a.hypothesis_id == b.hypothesis_id {
                continue;
            }
            let shared: Vec<&ItemId> = a_items.intersection(b_items).collect();
            if shared.is_empty() {
                continue;
            }
            let f = findings
                .entry(ordered_pair(&a.hypothesis_id, &b.hypothesis_id))
                .or_default();
            f.agents.insert(a.agent_id.clone());
            f.agents.insert(b.agent_id.clone());
            f.items.extend(shared.into_iter().cloned());
        }
    }
    findings
}

/// Computes the conflict changes caused by committing `round` on top of
/// `conflicts`. Pure: the caller applies the result.
pub fn detect_conflicts(conflicts: &[Conflict], round: &Round) -> Vec<ConflictChange> {
    let r = round.round_index;
    let findings = pair_findings(round);
    let mut changes = Vec::new();

    let mut active: Vec<&Conflict> = conflicts.iter().filter(|c| c.is_active()).collect();
    active.sort_by(|a, b| a.conflict_id.cmp(&b.conflict_id));
    for conflict in active {
        let mut next = conflict.clone();
        let finding = findings.get(&conflict.hypothesis_pair);
        if let Some(f) = finding {
            for agent in f.agents.difference(&conflict.involved_agents) {
                next.lifecycle.push(LifecycleEvent::new(
                    LifecycleKind::AgentJoined,
                    r,
                    agent.as_str(),
                ));
            }
            next.involved_agents.extend(f.agents.iter().cloned());
            next.contested_item_ids.extend(f.items.iter().cloned());
        }
        for agent in &conflict.involved_agents {
            let Some(op) = round.opinion(agent) else { continue };
            if op.carried_forward {
                continue;
            }
            if let Some(from) = &op.changed_from {
                next.lifecycle.push(LifecycleEvent::new(
                    LifecycleKind::StanceChanged,
                    r,
                    format!("{agent}: {from} -> {}", op.hypothesis_id),
                ));
            }
        }
        match finding {
            Some(_) if next != *conflict => changes.push(ConflictChange::Updated(next)),
            Some(_) => {}
            None => {
                next.status = ConflictStatus::Resolved;
                next.lifecycle
                    .push(LifecycleEvent::new(LifecycleKind::Resolved, r, ""));
                changes.push(ConflictChange::Resolved(next));
            }
        }
    }

    let mut next_number = conflicts.len() + 1;
    for (pair, f) in findings {
        if conflicts
            .iter()
            .any(|c| c.is_active() && c.hypothesis_pair == pair)
        {
            continue;
        }
        let supersedes = conflicts
            .iter()
            .rev()
            .find(|c| c.hypothesis_pair == pair)
            .map(|c| c.conflict_id.clone());
        let agents: Vec<&str> = f.agents.iter().map(|a| a.as_str()).collect();
        let conflict = Conflict {
            conflict_id: ConflictId::new(format!("c{next_number}")),
            lifecycle: vec![LifecycleEvent::new(
                LifecycleKind::Opened,
                r,
                format!("{} vs {} ({})", pair[0], pair[1], agents.join(", ")),
            )],
            hypothesis_pair: pair,
            involved_agents: f.agents,
            contested_item_ids: f.items,
            status: ConflictStatus::Active,
            supersedes,
        };
        next_number += 1;
        changes.push(ConflictChange::Opened(conflict));
    }
    changes
}

/// Applies detection output to the conflict store.
pub fn apply_changes(conflicts: &mut Vec<Conflict>, changes: &[ConflictChange]) {
    for change in changes {
        let c = change.conflict();
        match conflicts.iter_mut().find(|x| x.conflict_id == c.conflict_id) {
            Some(slot) => *slot = c.clone(),
            None => conflicts.push(c.clone()),
        }
    }
}
