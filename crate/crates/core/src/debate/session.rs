//! The debate engine. Every state change goes through an atomic batch of
//! events; the live state is the same fold any replay computes.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tracing::{debug, info, warn};

use super::statement::{parse_statement, ParsedStatement, ValidationFailure};
use super::transport::{AgentTransport, ConflictBrief, ContextBundle, OpinionDigest, TransportError};
use super::{
    AgentProfile, ControlAction, DebateConfig, EngineError, Intervention, Opinion, Phase, Round,
    RoundKind, RoundTrigger, SessionStatus,
};
use crate::analysis::{check_convergence, consensus_summary, ConflictChange, ConvergenceStatus};
use crate::case::{apply_item_edit, validate_case, CaseRecord, ItemEdit};
use crate::ids::{AgentId, ConflictId, HypothesisId, InterventionId, ItemId};
use crate::store::{
    Event, EventBody, EventLog, EventSink, FoldMode, FoldTarget, Replayer, SessionState,
};

pub trait Clock: Send + Sync {
    fn now_millis(&self) -> i64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_millis(&self) -> i64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as i64)
    }
}

/// Always returns the same instant.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedClock(pub i64);

impl Clock for FixedClock {
    fn now_millis(&self) -> i64 {
        self.0
    }
}

/// Clinician input for a revision round; the engine assigns the id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionRequest {
    pub selected_item_ids: BTreeSet<ItemId>,
    pub instruction: String,
    pub target_agent_ids: BTreeSet<AgentId>,
}

#[derive(Default)]
struct ExtraContext {
    highlighted: BTreeSet<ItemId>,
    instruction: Option<String>,
    conflict: Option<ConflictBrief>,
}

enum Attempt {
    Rejected { raw: String, failure: ValidationFailure },
    Accepted(ParsedStatement),
}

pub struct Session {
    log: EventLog,
    state: SessionState,
    clock: Arc<dyn Clock>,
    sink: Option<Box<dyn EventSink>>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("session_id", &self.state.session_id)
            .field("events", &self.log.len())
            .finish()
    }
}

impl Session {
    pub fn create(
        case: CaseRecord,
        agents: Vec<AgentProfile>,
        config: DebateConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Session, EngineError> {
        let id = format!("session-{}", uuid::Uuid::new_v4().simple());
        Self::create_with_id(id, case, agents, config, clock)
    }

    pub fn create_with_id(
        session_id: impl Into<String>,
        case: CaseRecord,
        mut agents: Vec<AgentProfile>,
        config: DebateConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Session, EngineError> {
        let report = validate_case(&case);
        if !report.is_valid() {
            return Err(EngineError::InvalidCase(report));
        }
        if agents.len() < 2 {
            return Err(EngineError::TooFewAgents);
        }
        let mut seen = BTreeSet::new();
        for a in &agents {
            if !seen.insert(&a.agent_id) {
                return Err(EngineError::DuplicateAgent(a.agent_id.clone()));
            }
        }
        config.validate()?;
        for (i, a) in agents.iter_mut().enumerate() {
            a.color_index = i as u32;
        }
        let session_id = session_id.into();
        let event = Event {
            seq: 1,
            ts: clock.now_millis(),
            body: EventBody::SessionCreated {
                session_id: session_id.clone(),
                case,
                agents,
                config,
            },
        };
        let mut replayer = Replayer::new(FoldMode::Strict);
        replayer.apply(&event)?;
        let (state, _) = replayer.into_parts();
        let mut log = EventLog::new(session_id);
        log.extend([event]);
        info!(session = %log.session_id(), "session created");
        Ok(Session {
            log,
            state: state.expect("SessionCreated yields state"),
            clock,
            sink: None,
        })
    }

    /// Rebuilds a session from a stored log.
    pub fn from_log(log: EventLog, clock: Arc<dyn Clock>) -> Result<Session, EngineError> {
        let state = log.fold_state(FoldTarget::Latest)?;
        Ok(Session {
            log,
            state,
            clock,
            sink: None,
        })
    }

    /// Persists the events written so far and every later batch to `sink`.
    pub fn attach_sink(&mut self, mut sink: Box<dyn EventSink>) -> Result<(), EngineError> {
        sink.persist(self.log.events())?;
        self.sink = Some(sink);
        Ok(())
    }

    pub fn session_id(&self) -> &str {
        &self.state.session_id
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn status(&self) -> &SessionStatus {
        &self.state.status
    }

    fn append_batch(&mut self, bodies: Vec<EventBody>) -> Result<(), EngineError> {
        let mut replayer = Replayer::resume(self.state.clone(), FoldMode::Strict);
        let mut events = Vec::with_capacity(bodies.len());
        for (seq, body) in (self.log.last_seq() + 1..).zip(bodies) {
            let event = Event {
                seq,
                ts: self.clock.now_millis(),
                body,
            };
            replayer.apply(&event)?;
            events.push(event);
        }
        if let Some(sink) = self.sink.as_mut() {
            sink.persist(&events)?;
        }
        self.log.extend(events);
        let (state, _) = replayer.into_parts();
        self.state = state.expect("resumed replayer holds state");
        Ok(())
    }

    /// Runs the initial round or the next debate round over every unmuted agent.
    pub fn run_round(
        &mut self,
        kind: RoundKind,
        transport: &dyn AgentTransport,
    ) -> Result<&Round, EngineError> {
        let phase = self.state.phase();
        if phase != Phase::Running {
            return Err(EngineError::WrongPhase(phase));
        }
        match kind {
            RoundKind::Initial if !self.state.rounds.is_empty() => {
                return Err(EngineError::IllegalTransition(
                    "initial round already committed".into(),
                ))
            }
            RoundKind::Debate if self.state.rounds.is_empty() => {
                return Err(EngineError::IllegalTransition(
                    "debate round before the initial round".into(),
                ))
            }
            RoundKind::Debate
                if self.state.debate_rounds_used() >= self.state.config.max_debate_rounds =>
            {
                return Err(EngineError::RoundBudgetExhausted)
            }
            RoundKind::Revision | RoundKind::ReEval => {
                return Err(EngineError::IllegalTransition(format!(
                    "{kind} rounds are started by interventions or re-evaluation requests"
                )))
            }
            _ => {}
        }
        let targets: Vec<AgentId> = self
            .state
            .present_agents()
            .map(|a| a.agent_id.clone())
            .collect();
        if targets.is_empty() {
            return Err(EngineError::EmptyTargets);
        }
        self.execute_round(transport, kind, targets, None, Vec::new(), ExtraContext::default())
    }

    /// Commits a revision round in which only the targeted agents speak.
    pub fn submit_intervention(
        &mut self,
        request: InterventionRequest,
        transport: &dyn AgentTransport,
    ) -> Result<&Round, EngineError> {
        let phase = self.state.phase();
        if !matches!(phase, Phase::Running | Phase::Converged) {
            return Err(EngineError::WrongPhase(phase));
        }
        if self.state.rounds.is_empty() {
            return Err(EngineError::NoRounds);
        }
        if request.target_agent_ids.is_empty() {
            return Err(EngineError::EmptyTargets);
        }
        if request.selected_item_ids.is_empty() {
            return Err(EngineError::EmptySelection);
        }
        if request.instruction.trim().is_empty() {
            return Err(EngineError::EmptyInstruction);
        }
        if let Some(item) = request
            .selected_item_ids
            .iter()
            .find(|i| !self.state.case.contains(i))
        {
            return Err(EngineError::UnknownItem(item.clone()));
        }
        for agent in &request.target_agent_ids {
            if self.state.agent(agent).is_none() {
                return Err(EngineError::UnknownAgent(agent.clone()));
            }
            if self.state.is_muted(agent) {
                return Err(EngineError::MutedAgent(agent.clone()));
            }
        }
        let intervention = Intervention {
            intervention_id: InterventionId::new(format!(
                "v{}",
                self.state.interventions.len() + 1
            )),
            selected_item_ids: request.selected_item_ids,
            instruction: request.instruction,
            target_agent_ids: request.target_agent_ids,
        };
        let targets = self.in_agent_order(&intervention.target_agent_ids);
        let extra = ExtraContext {
            highlighted: intervention.selected_item_ids.clone(),
            instruction: Some(intervention.instruction.clone()),
            conflict: None,
        };
        let trigger = RoundTrigger::Intervention(intervention.intervention_id.clone());
        self.execute_round(
            transport,
            RoundKind::Revision,
            targets,
            Some(trigger),
            vec![EventBody::InterventionSubmitted { intervention }],
            extra,
        )
    }

    /// Commits a re-evaluation round for the unmuted agents of an active conflict.
    pub fn request_reeval(
        &mut self,
        conflict_id: &ConflictId,
        transport: &dyn AgentTransport,
    ) -> Result<&Round, EngineError> {
        let conflict = self
            .state
            .conflict(conflict_id)
            .ok_or_else(|| EngineError::UnknownConflict(conflict_id.clone()))?;
        if !conflict.is_active() {
            return Err(EngineError::ConflictAlreadyResolved(conflict_id.clone()));
        }
        let phase = self.state.phase();
        if !matches!(phase, Phase::Running | Phase::Converged) {
            return Err(EngineError::WrongPhase(phase));
        }
        let involved: BTreeSet<AgentId> = conflict
            .involved_agents
            .iter()
            .filter(|a| !self.state.is_muted(a))
            .cloned()
            .collect();
        if involved.is_empty() {
            return Err(EngineError::EmptyTargets);
        }
        let brief = ConflictBrief {
            conflict_id: conflict_id.clone(),
            hypotheses: conflict
                .hypothesis_pair
                .clone()
                .map(|h| self.state.hypotheses.display(&h).to_owned()),
            contested_item_ids: conflict.contested_item_ids.clone(),
        };
        let targets = self.in_agent_order(&involved);
        let extra = ExtraContext {
            highlighted: conflict.contested_item_ids.clone(),
            instruction: None,
            conflict: Some(brief),
        };
        let pre = vec![EventBody::ReEvalRequested {
            conflict_id: conflict_id.clone(),
            round_index: self.state.rounds.len() as u32,
        }];
        self.execute_round(
            transport,
            RoundKind::ReEval,
            targets,
            Some(RoundTrigger::Conflict(conflict_id.clone())),
            pre,
            extra,
        )
    }

    pub fn control(&mut self, action: ControlAction) -> Result<SessionStatus, EngineError> {
        let phase = self.state.phase();
        let illegal = |what: &str| EngineError::IllegalTransition(format!("{what} in phase {phase}"));
        if phase == Phase::Terminated {
            return Err(illegal("session control"));
        }
        let body = match action {
            ControlAction::Pause if phase == Phase::Running => EventBody::SessionPaused {},
            ControlAction::Pause => return Err(illegal("pause")),
            ControlAction::Resume if phase == Phase::Paused => EventBody::SessionResumed {},
            ControlAction::Resume => return Err(illegal("resume")),
            ControlAction::Terminate => EventBody::SessionTerminated {
                consensus: consensus_summary(&self.state).ok(),
            },
            ControlAction::Mute(agent_id) => {
                if self.state.agent(&agent_id).is_none() {
                    return Err(EngineError::UnknownAgent(agent_id));
                }
                if self.state.is_muted(&agent_id) {
                    return Err(EngineError::IllegalTransition(format!("{agent_id} already muted")));
                }
                EventBody::AgentMuted { agent_id }
            }
            ControlAction::Unmute(agent_id) => {
                if self.state.agent(&agent_id).is_none() {
                    return Err(EngineError::UnknownAgent(agent_id));
                }
                if !self.state.is_muted(&agent_id) {
                    return Err(EngineError::IllegalTransition(format!("{agent_id} is not muted")));
                }
                EventBody::AgentUnmuted { agent_id }
            }
        };
        self.append_batch(vec![body])?;
        Ok(self.state.status.clone())
    }

    /// Case edit recorded in the log. Items cited by any committed opinion
    /// cannot be removed.
    pub fn edit_case(&mut self, edit: ItemEdit) -> Result<&CaseRecord, EngineError> {
        let phase = self.state.phase();
        if phase == Phase::Terminated {
            return Err(EngineError::WrongPhase(phase));
        }
        if let ItemEdit::Remove { id } = &edit {
            if self.state.item_is_cited(id) {
                return Err(EngineError::ItemInUse(id.clone()));
            }
        }
        let next = apply_item_edit(&self.state.case, &edit)?;
        self.append_batch(vec![EventBody::CaseItemEdited {
            edit,
            revision: next.revision,
        }])?;
        Ok(&self.state.case)
    }

    pub fn check_convergence(&self) -> Result<ConvergenceStatus, EngineError> {
        check_convergence(&self.state).map_err(|_| EngineError::NoRounds)
    }

    /// Validates a raw reply as if `agent` had sent it for the next round.
    /// The session is not modified.
    pub fn validate_statement(&self, raw: &str, agent: &AgentId) -> Result<Opinion, ValidationFailure> {
        let parsed = parse_statement(raw, &self.state.case)?;
        let mut registry = self.state.hypotheses.clone();
        let hypothesis_id = registry
            .canonicalize(&parsed.hypothesis_label_raw, &self.state.config.hypothesis_aliases)
            .map_err(|r| ValidationFailure { reasons: vec![r] })?;
        let changed_from = self.previous_hypothesis(agent).filter(|p| p != &hypothesis_id);
        Ok(parsed.into_opinion(
            agent.clone(),
            self.state.rounds.len() as u32,
            hypothesis_id,
            changed_from,
        ))
    }

    /// Registered id for `label`, if any.
    pub fn lookup_hypothesis(&self, label: &str) -> Option<HypothesisId> {
        self.state
            .hypotheses
            .lookup(label, &self.state.config.hypothesis_aliases)
            .ok()
            .flatten()
    }

    fn previous_hypothesis(&self, agent: &AgentId) -> Option<HypothesisId> {
        self.state.latest_opinion(agent).map(|o| o.hypothesis_id.clone())
    }

    fn in_agent_order(&self, set: &BTreeSet<AgentId>) -> Vec<AgentId> {
        self.state
            .agents
            .iter()
            .filter(|a| set.contains(&a.agent_id))
            .map(|a| a.agent_id.clone())
            .collect()
    }

    fn bundle_for(&self, agent: &AgentProfile, kind: RoundKind, extra: &ExtraContext) -> ContextBundle {
        let prior_opinions = match (kind, self.state.latest_round()) {
            (RoundKind::Initial, _) | (_, None) => Vec::new(),
            (_, Some(round)) => round
                .opinions
                .iter()
                .map(|o| OpinionDigest {
                    agent_id: o.agent_id.clone(),
                    specialty: self
                        .state
                        .agent(&o.agent_id)
                        .map(|a| a.specialty.clone())
                        .unwrap_or_default(),
                    hypothesis: self.state.hypotheses.display(&o.hypothesis_id).to_owned(),
                    summary: o.summary.clone(),
                    cited_item_ids: o.cited_item_ids(),
                })
                .collect(),
        };
        ContextBundle {
            round_index: self.state.rounds.len() as u32,
            kind,
            agent_id: agent.agent_id.clone(),
            role_prompt: agent.role_prompt.clone(),
            case_items: self.state.case.items.clone(),
            prior_opinions,
            highlighted_item_ids: extra.highlighted.clone(),
            instruction: extra.instruction.clone(),
            conflict: extra.conflict.clone(),
            attempt: 0,
            repair_reasons: Vec::new(),
        }
    }

    /// Queries one agent, re-prompting with validation reasons up to
    /// `max_repairs` times.
    fn query_agent(
        case: &CaseRecord,
        max_repairs: u32,
        transport: &dyn AgentTransport,
        agent: &AgentProfile,
        mut bundle: ContextBundle,
    ) -> Result<Vec<Attempt>, TransportError> {
        let mut attempts = Vec::new();
        for attempt in 0..=max_repairs {
            bundle.attempt = attempt;
            let raw = transport.complete(agent, &bundle)?;
            match parse_statement(&raw, case) {
                Ok(parsed) => {
                    attempts.push(Attempt::Accepted(parsed));
                    break;
                }
                Err(failure) => {
                    debug!(agent = %agent.agent_id, attempt, %failure, "statement rejected");
                    bundle.repair_reasons = failure.repair_lines();
                    attempts.push(Attempt::Rejected { raw, failure });
                }
            }
        }
        Ok(attempts)
    }

    fn execute_round(
        &mut self,
        transport: &dyn AgentTransport,
        kind: RoundKind,
        targets: Vec<AgentId>,
        trigger: Option<RoundTrigger>,
        pre: Vec<EventBody>,
        extra: ExtraContext,
    ) -> Result<&Round, EngineError> {
        let round_index = self.state.rounds.len() as u32;
        let jobs: Vec<(&AgentProfile, ContextBundle)> = targets
            .iter()
            .map(|id| {
                let agent = self.state.agent(id).expect("targets are session agents");
                (agent, self.bundle_for(agent, kind, &extra))
            })
            .collect();
        let case = &self.state.case;
        let max_repairs = self.state.config.max_repairs;
        let results: Vec<Result<Vec<Attempt>, TransportError>> = std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .into_iter()
                .map(|(agent, bundle)| {
                    s.spawn(move || Self::query_agent(case, max_repairs, transport, agent, bundle))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("agent query panicked"))
                .collect()
        });
        let mut outcomes = Vec::with_capacity(results.len());
        for (agent, result) in targets.iter().zip(results) {
            match result {
                Ok(attempts) => outcomes.push(attempts),
                Err(e) => {
                    warn!(%agent, round_index, "transport failure, round aborted");
                    return Err(EngineError::TransportDown(format!("{agent}: {e}")));
                }
            }
        }

        let aliases = &self.state.config.hypothesis_aliases;
        let mut registry = self.state.hypotheses.clone();
        let mut bodies = pre;
        bodies.push(EventBody::RoundStarted {
            round_index,
            kind,
            targets: targets.clone(),
            trigger,
        });
        for (agent_id, attempts) in targets.iter().zip(outcomes) {
            for (attempt, outcome) in attempts.into_iter().enumerate() {
                let attempt = attempt as u32;
                match outcome {
                    Attempt::Rejected { raw, failure } => bodies.push(EventBody::StatementRejected {
                        agent_id: agent_id.clone(),
                        attempt,
                        reasons: failure.reasons,
                        raw,
                    }),
                    Attempt::Accepted(parsed) => {
                        let hypothesis_id = registry
                            .canonicalize(&parsed.hypothesis_label_raw, aliases)
                            .expect("parsed statements carry a hypothesis");
                        let changed_from = self
                            .previous_hypothesis(agent_id)
                            .filter(|p| p != &hypothesis_id);
                        bodies.push(EventBody::StatementAccepted {
                            agent_id: agent_id.clone(),
                            attempt,
                            opinion: parsed.into_opinion(
                                agent_id.clone(),
                                round_index,
                                hypothesis_id,
                                changed_from,
                            ),
                        });
                    }
                }
            }
        }

        let mut scratch = Replayer::resume(self.state.clone(), FoldMode::Strict);
        for (seq, body) in (self.log.last_seq() + 1..).zip(&bodies) {
            scratch.apply(&Event {
                seq,
                ts: 0,
                body: body.clone(),
            })?;
        }
        let outcome = scratch
            .state()
            .expect("resumed replayer holds state")
            .derive_commit()?;
        bodies.push(EventBody::RoundCommitted {
            round_index,
            summary: outcome.summary,
        });
        bodies.extend(outcome.changes.into_iter().map(|change| match change {
            ConflictChange::Opened(conflict) => EventBody::ConflictOpened { conflict },
            ConflictChange::Updated(conflict) => EventBody::ConflictUpdated { conflict },
            ConflictChange::Resolved(conflict) => EventBody::ConflictResolved { conflict },
        }));
        self.append_batch(bodies)?;
        info!(session = %self.state.session_id, round_index, %kind, "round committed");
        Ok(self.state.rounds.last().expect("round just committed"))
    }
}
