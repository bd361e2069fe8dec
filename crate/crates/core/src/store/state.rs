//! Session state as the left fold of its event log.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Event, EventBody, StoreError};
use crate::analysis::{
    apply_changes, consensus_summary, convergence_of, detect_conflicts, summarize_round,
    Conflict, ConflictChange, ConflictDelta, ConsensusSummary, RoundSummary,
};
use crate::case::{apply_item_edit, validate_case, CaseRecord, ItemEdit};
use crate::debate::{
    AgentProfile, DebateConfig, HypothesisRegistry, Intervention, Opinion, Phase, Round,
    RoundKind, RoundTrigger, SessionStatus,
};
use crate::ids::{AgentId, ConflictId, ItemId};

/// A round between `RoundStarted` and `RoundCommitted`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingRound {
    pub round_index: u32,
    pub kind: RoundKind,
    pub targets: Vec<AgentId>,
    pub trigger: Option<RoundTrigger>,
    pub accepted: Vec<Opinion>,
    /// Registry as it will stand once the accepted statements commit.
    pub registry: HypothesisRegistry,
}

/// Everything derivable from an event prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub case: CaseRecord,
    pub agents: Vec<AgentProfile>,
    pub config: DebateConfig,
    pub rounds: Vec<Round>,
    pub hypotheses: HypothesisRegistry,
    pub conflicts: Vec<Conflict>,
    /// Detection output per committed round, parallel to `rounds`.
    pub round_deltas: Vec<ConflictDelta>,
    pub interventions: Vec<Intervention>,
    pub status: SessionStatus,
    pub pending: Option<PendingRound>,
    pub final_consensus: Option<ConsensusSummary>,
    pub last_seq: u64,
}

/// Derived result of committing the pending round.
#[derive(Debug, Clone, PartialEq)]
pub struct CommitOutcome {
    pub round: Round,
    pub changes: Vec<ConflictChange>,
    pub summary: RoundSummary,
}

impl SessionState {
    pub fn phase(&self) -> Phase {
        self.status.phase
    }

    pub fn agent(&self, id: &AgentId) -> Option<&AgentProfile> {
        self.agents.iter().find(|a| &a.agent_id == id)
    }

    pub fn conflict(&self, id: &ConflictId) -> Option<&Conflict> {
        self.conflicts.iter().find(|c| &c.conflict_id == id)
    }

    pub fn is_muted(&self, id: &AgentId) -> bool {
        self.status.muted_agents.contains(id)
    }

    /// Unmuted agents in session order.
    pub fn present_agents(&self) -> impl Iterator<Item = &AgentProfile> {
        self.agents.iter().filter(|a| !self.is_muted(&a.agent_id))
    }

    /// The agent's opinion in the most recent round it took part in.
    pub fn latest_opinion(&self, agent: &AgentId) -> Option<&Opinion> {
        self.rounds.iter().rev().find_map(|r| r.opinion(agent))
    }

    /// Initial and Debate rounds committed so far.
    pub fn debate_rounds_used(&self) -> u32 {
        self.rounds
            .iter()
            .filter(|r| matches!(r.kind, RoundKind::Initial | RoundKind::Debate))
            .count() as u32
    }

    pub fn latest_round(&self) -> Option<&Round> {
        self.rounds.last()
    }

    /// Whether any committed opinion cites `item`.
    pub fn item_is_cited(&self, item: &ItemId) -> bool {
        self.rounds
            .iter()
            .flat_map(|r| &r.opinions)
            .any(|o| o.cited_item_ids().contains(item) || o.evidence.iter().any(|e| e.applies_to_item_ids.contains(item)))
    }

    /// Assembles the pending round with carry-forward and runs detection.
    pub fn derive_commit(&self) -> Result<CommitOutcome, StoreError> {
        let pending = self
            .pending
            .as_ref()
            .ok_or_else(|| StoreError::IllegalEvent("no round in flight".into()))?;
        let r = pending.round_index;
        let targets: BTreeSet<AgentId> = pending.targets.iter().cloned().collect();
        let mut opinions = Vec::new();
        let mut abstained = BTreeSet::new();
        for agent in self.present_agents() {
            let id = &agent.agent_id;
            let previous = self.latest_opinion(id);
            if targets.contains(id) {
                if let Some(fresh) = pending.accepted.iter().find(|o| &o.agent_id == id) {
                    opinions.push(fresh.clone());
                    continue;
                }
                abstained.insert(id.clone());
                if let Some(prev) = previous {
                    let mut carried = prev.carried_to(r);
                    carried.invalid_output = true;
                    opinions.push(carried);
                }
            } else if let Some(prev) = previous {
                opinions.push(prev.carried_to(r));
            }
        }
        let round = Round {
            round_index: r,
            kind: pending.kind,
            spoke: targets,
            abstained,
            opinions,
            trigger: pending.trigger.clone(),
        };
        let changes = detect_conflicts(&self.conflicts, &round);
        let summary = summarize_round(&round, &ConflictDelta::from_changes(&changes));
        Ok(CommitOutcome {
            round,
            changes,
            summary,
        })
    }
}

/// A recorded analytics payload that disagrees with recomputation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub seq: u64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldMode {
    /// First divergence is an error.
    Strict,
    /// Divergences are collected; recomputed values win.
    Audit,
}

/// Incremental left fold over events.
#[derive(Debug, Clone)]
pub struct Replayer {
    state: Option<SessionState>,
    expected: VecDeque<ConflictChange>,
    divergences: Vec<Divergence>,
    mode: FoldMode,
}

fn illegal(msg: impl Into<String>) -> StoreError {
    StoreError::IllegalEvent(msg.into())
}

impl Replayer {
    pub fn new(mode: FoldMode) -> Self {
        Replayer {
            state: None,
            expected: VecDeque::new(),
            divergences: Vec::new(),
            mode,
        }
    }

    /// Continues folding from an already-folded state at a batch boundary.
    pub fn resume(state: SessionState, mode: FoldMode) -> Self {
        Replayer {
            state: Some(state),
            expected: VecDeque::new(),
            divergences: Vec::new(),
            mode,
        }
    }

    pub fn state(&self) -> Option<&SessionState> {
        self.state.as_ref()
    }

    pub fn divergences(&self) -> &[Divergence] {
        &self.divergences
    }

    pub fn into_parts(self) -> (Option<SessionState>, Vec<Divergence>) {
        (self.state, self.divergences)
    }

    fn diverge(&mut self, seq: u64, kind: &str, detail: String) -> Result<(), StoreError> {
        match self.mode {
            FoldMode::Strict => Err(StoreError::Divergence { seq, detail }),
            FoldMode::Audit => {
                self.divergences.push(Divergence {
                    seq,
                    kind: kind.to_owned(),
                    detail,
                });
                Ok(())
            }
        }
    }

    pub fn apply(&mut self, event: &Event) -> Result<(), StoreError> {
        let expected_seq = self.state.as_ref().map_or(1, |s| s.last_seq + 1);
        if event.seq != expected_seq {
            return Err(illegal(format!(
                "sequence gap: expected {expected_seq}, got {}",
                event.seq
            )));
        }
        let kind = event.body.kind_name();

        if event.body.is_conflict_event() {
            return self.apply_conflict_event(event);
        }
        if !self.expected.is_empty() {
            let missing: Vec<String> = self
                .expected
                .drain(..)
                .map(|c| c.conflict().conflict_id.to_string())
                .collect();
            self.diverge(
                event.seq,
                kind,
                format!("recorded conflict events missing for {}", missing.join(", ")),
            )?;
        }

        if let EventBody::SessionCreated {
            session_id,
            case,
            agents,
            config,
        } = &event.body
        {
            if self.state.is_some() {
                return Err(illegal("SessionCreated after session start"));
            }
            self.state = Some(create_state(session_id, case, agents, config, event.seq)?);
            return Ok(());
        }

        let mut state = self
            .state
            .take()
            .ok_or_else(|| illegal(format!("first event must be SessionCreated, got {kind}")))?;
        let result = self.apply_to(&mut state, event);
        if result.is_ok() {
            state.last_seq = event.seq;
        }
        self.state = Some(state);
        result
    }

    fn apply_conflict_event(&mut self, event: &Event) -> Result<(), StoreError> {
        let kind = event.body.kind_name();
        let Some(state) = self.state.as_mut() else {
            return Err(illegal("first event must be SessionCreated"));
        };
        state.last_seq = event.seq;
        let recorded = match &event.body {
            EventBody::ConflictOpened { conflict } => ConflictChange::Opened(conflict.clone()),
            EventBody::ConflictUpdated { conflict } => ConflictChange::Updated(conflict.clone()),
            EventBody::ConflictResolved { conflict } => ConflictChange::Resolved(conflict.clone()),
            _ => unreachable!(),
        };
        match self.expected.pop_front() {
            None => self.diverge(
                event.seq,
                kind,
                format!(
                    "unexpected recorded {kind} for {}",
                    recorded.conflict().conflict_id
                ),
            ),
            Some(expected) if expected != recorded => self.diverge(
                event.seq,
                kind,
                format!(
                    "recorded {kind} for {} differs from recomputed conflict {}",
                    recorded.conflict().conflict_id,
                    expected.conflict().conflict_id
                ),
            ),
            Some(_) => Ok(()),
        }
    }

    fn apply_to(&mut self, state: &mut SessionState, event: &Event) -> Result<(), StoreError> {
        let seq = event.seq;
        let kind = event.body.kind_name();
        if state.status.phase == Phase::Terminated {
            return Err(illegal(format!("{kind} after SessionTerminated")));
        }
        let no_pending = |state: &SessionState| {
            if state.pending.is_some() {
                Err(illegal(format!("{kind} while a round is in flight")))
            } else {
                Ok(())
            }
        };
        match &event.body {
            EventBody::SessionCreated { .. } => unreachable!(),
            EventBody::CaseItemEdited { edit, revision } => {
                no_pending(state)?;
                if let ItemEdit::Remove { id } = edit {
                    if state.item_is_cited(id) {
                        return Err(illegal(format!("cannot remove cited item {id}")));
                    }
                }
                let next = apply_item_edit(&state.case, edit).map_err(|e| illegal(e.to_string()))?;
                if next.revision != *revision {
                    return Err(illegal(format!(
                        "edit produces revision {}, event says {revision}",
                        next.revision
                    )));
                }
                state.case = next;
            }
            EventBody::RoundStarted {
                round_index,
                kind: round_kind,
                targets,
                trigger,
            } => {
                no_pending(state)?;
                check_round_start(state, *round_index, *round_kind, targets, trigger.as_ref())?;
                state.pending = Some(PendingRound {
                    round_index: *round_index,
                    kind: *round_kind,
                    targets: targets.clone(),
                    trigger: trigger.clone(),
                    accepted: Vec::new(),
                    registry: state.hypotheses.clone(),
                });
            }
            EventBody::StatementAccepted {
                agent_id,
                opinion,
                ..
            } => {
                let recomputed = check_statement(state, agent_id, opinion)?;
                if recomputed.hypothesis_id != opinion.hypothesis_id
                    || recomputed.changed_from != opinion.changed_from
                {
                    self.diverge(
                        seq,
                        kind,
                        format!(
                            "{agent_id}: recorded hypothesis {} (from {:?}), recomputed {} (from {:?})",
                            opinion.hypothesis_id,
                            opinion.changed_from.as_ref().map(|h| h.as_str()),
                            recomputed.hypothesis_id,
                            recomputed.changed_from.as_ref().map(|h| h.as_str()),
                        ),
                    )?;
                }
                state.pending.as_mut().unwrap().accepted.push(recomputed);
            }
            EventBody::StatementRejected { agent_id, .. } => {
                let pending = state
                    .pending
                    .as_ref()
                    .ok_or_else(|| illegal("StatementRejected outside a round"))?;
                if !pending.targets.contains(agent_id) {
                    return Err(illegal(format!("{agent_id} is not queried this round")));
                }
                if pending.accepted.iter().any(|o| &o.agent_id == agent_id) {
                    return Err(illegal(format!("{agent_id} already accepted this round")));
                }
            }
            EventBody::RoundCommitted {
                round_index,
                summary,
            } => {
                let pending = state
                    .pending
                    .as_ref()
                    .ok_or_else(|| illegal("RoundCommitted without RoundStarted"))?;
                if pending.round_index != *round_index {
                    return Err(illegal(format!(
                        "committing round {round_index}, round {} in flight",
                        pending.round_index
                    )));
                }
                let outcome = state.derive_commit()?;
                if &outcome.summary != summary {
                    self.diverge(
                        seq,
                        kind,
                        format!("recorded summary of round {round_index} differs from recomputed"),
                    )?;
                }
                let pending = state.pending.take().unwrap();
                state.hypotheses = pending.registry;
                apply_changes(&mut state.conflicts, &outcome.changes);
                state
                    .round_deltas
                    .push(ConflictDelta::from_changes(&outcome.changes));
                let convergence = convergence_of(
                    &outcome.round,
                    &state.status.muted_agents,
                    state.config.consensus_threshold,
                );
                state.rounds.push(outcome.round);
                if state.config.convergence_stops_debate {
                    state.status.phase = if convergence.converged {
                        Phase::Converged
                    } else {
                        Phase::Running
                    };
                }
                self.expected = outcome.changes.into();
            }
            EventBody::ConflictOpened { .. }
            | EventBody::ConflictUpdated { .. }
            | EventBody::ConflictResolved { .. } => unreachable!(),
            EventBody::InterventionSubmitted { intervention } => {
                no_pending(state)?;
                require_phase(state, kind, &[Phase::Running, Phase::Converged])?;
                check_intervention(state, intervention)?;
                state.interventions.push(intervention.clone());
            }
            EventBody::ReEvalRequested {
                conflict_id,
                round_index,
            } => {
                no_pending(state)?;
                require_phase(state, kind, &[Phase::Running, Phase::Converged])?;
                if *round_index as usize != state.rounds.len() {
                    return Err(illegal(format!("re-eval must target round {}", state.rounds.len())));
                }
                let conflict = state
                    .conflicts
                    .iter_mut()
                    .find(|c| &c.conflict_id == conflict_id)
                    .ok_or_else(|| illegal(format!("unknown conflict {conflict_id}")))?;
                if !conflict.is_active() {
                    return Err(illegal(format!("conflict {conflict_id} is resolved")));
                }
                conflict.record_reeval(*round_index);
            }
            EventBody::AgentMuted { agent_id } => {
                no_pending(state)?;
                if state.agent(agent_id).is_none() {
                    return Err(illegal(format!("unknown agent {agent_id}")));
                }
                if !state.status.muted_agents.insert(agent_id.clone()) {
                    return Err(illegal(format!("{agent_id} already muted")));
                }
            }
            EventBody::AgentUnmuted { agent_id } => {
                no_pending(state)?;
                if !state.status.muted_agents.remove(agent_id) {
                    return Err(illegal(format!("{agent_id} is not muted")));
                }
            }
            EventBody::SessionPaused {} => {
                no_pending(state)?;
                require_phase(state, kind, &[Phase::Running])?;
                state.status.phase = Phase::Paused;
            }
            EventBody::SessionResumed {} => {
                no_pending(state)?;
                require_phase(state, kind, &[Phase::Paused])?;
                state.status.phase = Phase::Running;
            }
            EventBody::SessionTerminated { consensus } => {
                no_pending(state)?;
                let recomputed = consensus_summary(state).ok();
                if &recomputed != consensus {
                    self.diverge(
                        seq,
                        kind,
                        "recorded consensus summary differs from recomputed".into(),
                    )?;
                }
                state.final_consensus = recomputed;
                state.status.phase = Phase::Terminated;
            }
        }
        Ok(())
    }
}

fn require_phase(state: &SessionState, kind: &str, allowed: &[Phase]) -> Result<(), StoreError> {
    if allowed.contains(&state.status.phase) {
        Ok(())
    } else {
        Err(illegal(format!("{kind} not allowed in phase {}", state.status.phase)))
    }
}

fn create_state(
    session_id: &str,
    case: &CaseRecord,
    agents: &[AgentProfile],
    config: &DebateConfig,
    seq: u64,
) -> Result<SessionState, StoreError> {
    let report = validate_case(case);
    if !report.is_valid() {
        return Err(illegal(format!("invalid case: {report}")));
    }
    if agents.len() < 2 {
        return Err(illegal("fewer than two agents"));
    }
    let ids: BTreeSet<&AgentId> = agents.iter().map(|a| &a.agent_id).collect();
    let colors: BTreeSet<u32> = agents.iter().map(|a| a.color_index).collect();
    if ids.len() != agents.len() || colors.len() != agents.len() {
        return Err(illegal("agent ids and colors must be unique"));
    }
    config.validate().map_err(|e| illegal(e.to_string()))?;
    Ok(SessionState {
        session_id: session_id.to_owned(),
        case: case.clone(),
        agents: agents.to_vec(),
        config: config.clone(),
        rounds: Vec::new(),
        hypotheses: HypothesisRegistry::default(),
        conflicts: Vec::new(),
        round_deltas: Vec::new(),
        interventions: Vec::new(),
        status: SessionStatus {
            phase: Phase::Running,
            muted_agents: BTreeSet::new(),
        },
        pending: None,
        final_consensus: None,
        last_seq: seq,
    })
}

fn check_round_start(
    state: &SessionState,
    round_index: u32,
    kind: RoundKind,
    targets: &[AgentId],
    trigger: Option<&RoundTrigger>,
) -> Result<(), StoreError> {
    if round_index as usize != state.rounds.len() {
        return Err(illegal(format!(
            "round index {round_index}, expected {}",
            state.rounds.len()
        )));
    }
    let present: Vec<AgentId> = state.present_agents().map(|a| a.agent_id.clone()).collect();
    match kind {
        RoundKind::Initial | RoundKind::Debate => {
            require_phase(state, "RoundStarted", &[Phase::Running])?;
            if (kind == RoundKind::Initial) != state.rounds.is_empty() {
                return Err(illegal(format!("{kind} round at index {round_index}")));
            }
            if kind == RoundKind::Debate && state.debate_rounds_used() >= state.config.max_debate_rounds {
                return Err(illegal("debate round budget exhausted"));
            }
            if targets != present.as_slice() {
                return Err(illegal(format!("{kind} round must query every unmuted agent")));
            }
            if trigger.is_some() {
                return Err(illegal(format!("{kind} round cannot carry a trigger")));
            }
        }
        RoundKind::Revision | RoundKind::ReEval => {
            require_phase(state, "RoundStarted", &[Phase::Running, Phase::Converged])?;
            if state.rounds.is_empty() {
                return Err(illegal(format!("{kind} round before the initial round")));
            }
            if targets.is_empty() || targets.iter().any(|t| !present.contains(t)) {
                return Err(illegal("targets must be a non-empty set of unmuted agents"));
            }
            match (kind, trigger) {
                (RoundKind::Revision, Some(RoundTrigger::Intervention(id))) => {
                    if state.interventions.last().map(|i| &i.intervention_id) != Some(id) {
                        return Err(illegal(format!("revision round for unknown intervention {id}")));
                    }
                }
                (RoundKind::ReEval, Some(RoundTrigger::Conflict(id))) => {
                    if !state.conflict(id).is_some_and(|c| c.is_active()) {
                        return Err(illegal(format!("re-eval round for inactive conflict {id}")));
                    }
                }
                _ => return Err(illegal(format!("{kind} round with mismatched trigger"))),
            }
        }
    }
    Ok(())
}

/// Reference checks plus engine-side recomputation of hypothesis identity
/// and opinion change.
fn check_statement(
    state: &mut SessionState,
    agent_id: &AgentId,
    opinion: &Opinion,
) -> Result<Opinion, StoreError> {
    let aliases = state.config.hypothesis_aliases.clone();
    let previous = state.latest_opinion(agent_id).map(|o| o.hypothesis_id.clone());
    let case = &state.case;
    let pending = state
        .pending
        .as_mut()
        .ok_or_else(|| illegal("StatementAccepted outside a round"))?;
    if !pending.targets.contains(agent_id) || &opinion.agent_id != agent_id {
        return Err(illegal(format!("{agent_id} is not queried this round")));
    }
    if pending.accepted.iter().any(|o| &o.agent_id == agent_id) {
        return Err(illegal(format!("{agent_id} already accepted this round")));
    }
    if opinion.round_index != pending.round_index || opinion.carried_forward || opinion.invalid_output {
        return Err(illegal(format!("malformed accepted opinion for {agent_id}")));
    }
    let declared: BTreeSet<_> = opinion.evidence.iter().map(|e| &e.evidence_id).collect();
    if declared.len() != opinion.evidence.len() {
        return Err(illegal("duplicate evidence id"));
    }
    for step in &opinion.reasoning_steps {
        if let Some(i) = step.cited_item_ids.iter().find(|i| !case.contains(i)) {
            return Err(illegal(format!("opinion cites unknown item {i}")));
        }
        if let Some(e) = step.cited_evidence_ids.iter().find(|e| !declared.contains(e)) {
            return Err(illegal(format!("opinion cites undeclared evidence {e}")));
        }
    }
    for e in &opinion.evidence {
        if let Some(i) = e.applies_to_item_ids.iter().find(|i| !case.contains(i)) {
            return Err(illegal(format!("evidence cites unknown item {i}")));
        }
    }
    let hypothesis_id = pending
        .registry
        .canonicalize(&opinion.hypothesis_label_raw, &aliases)
        .map_err(|e| illegal(e.to_string()))?;
    let changed_from = previous.filter(|p| p != &hypothesis_id);
    Ok(Opinion {
        hypothesis_id,
        changed_from,
        ..opinion.clone()
    })
}

fn check_intervention(state: &SessionState, iv: &Intervention) -> Result<(), StoreError> {
    if iv.selected_item_ids.is_empty() || iv.instruction.trim().is_empty() || iv.target_agent_ids.is_empty() {
        return Err(illegal("intervention needs items, an instruction and targets"));
    }
    if let Some(i) = iv.selected_item_ids.iter().find(|i| !state.case.contains(i)) {
        return Err(illegal(format!("intervention selects unknown item {i}")));
    }
    if let Some(a) = iv
        .target_agent_ids
        .iter()
        .find(|a| state.agent(a).is_none() || state.is_muted(a))
    {
        return Err(illegal(format!("intervention targets unavailable agent {a}")));
    }
    if state
        .interventions
        .iter()
        .any(|x| x.intervention_id == iv.intervention_id)
    {
        return Err(illegal(format!("duplicate intervention id {}", iv.intervention_id)));
    }
    Ok(())
}
