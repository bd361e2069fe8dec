//! Multi-round specialist debate: domain types, statement validation,
//! hypothesis canonicalization, agent transports and the session engine.

mod error;
mod hypothesis;
mod session;
mod statement;
mod transport;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{AgentId, ConflictId, EvidenceId, HypothesisId, InterventionId, ItemId};

pub use error::EngineError;
pub use hypothesis::{normalize_label, HypothesisEntry, HypothesisRegistry, PALETTE_SIZE};
pub use session::{Clock, FixedClock, InterventionRequest, Session, SystemClock};
pub use statement::{
    extract_json_object, parse_statement, AgentStatement, EvidenceWire, ParsedStatement,
    StepWire, ValidationFailure, ValidationReason,
};
pub use transport::{
    render_prompt, AgentTransport, ConflictBrief, ContextBundle, FnTransport, LiveTransport,
    OpinionDigest, ScriptedTransport, TransportError,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent_id: AgentId,
    pub specialty: String,
    #[serde(default)]
    pub role_prompt: String,
    /// Assigned from list position when the session is created.
    #[serde(default)]
    pub color_index: u32,
}

impl AgentProfile {
    pub fn new(agent_id: impl Into<AgentId>, specialty: impl Into<String>) -> Self {
        let specialty = specialty.into();
        AgentProfile {
            agent_id: agent_id.into(),
            role_prompt: format!("You are the {specialty} specialist on a multidisciplinary team."),
            specialty,
            color_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebateConfig {
    pub max_debate_rounds: u32,
    pub convergence_stops_debate: bool,
    pub max_repairs: u32,
    pub consensus_threshold: f64,
    pub hypothesis_aliases: BTreeMap<String, String>,
}

impl Default for DebateConfig {
    fn default() -> Self {
        DebateConfig {
            max_debate_rounds: 3,
            convergence_stops_debate: true,
            max_repairs: 2,
            consensus_threshold: 1.0,
            hypothesis_aliases: BTreeMap::new(),
        }
    }
}

impl DebateConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.max_debate_rounds == 0 {
            return Err(EngineError::InvalidConfig(
                "max_debate_rounds must be positive".into(),
            ));
        }
        if !(self.consensus_threshold > 0.5 && self.consensus_threshold <= 1.0) {
            return Err(EngineError::InvalidConfig(format!(
                "consensus_threshold {} outside (0.5, 1.0]",
                self.consensus_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceSource {
    Guideline,
    Literature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub evidence_id: EvidenceId,
    pub source_type: EvidenceSource,
    pub citation: String,
    pub snippet: String,
    pub applies_to_item_ids: BTreeSet<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub text: String,
    pub cited_item_ids: BTreeSet<ItemId>,
    pub cited_evidence_ids: BTreeSet<EvidenceId>,
}

/// One agent's statement in one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opinion {
    pub agent_id: AgentId,
    pub round_index: u32,
    pub hypothesis_id: HypothesisId,
    pub hypothesis_label_raw: String,
    pub reasoning_steps: Vec<ReasoningStep>,
    pub summary: String,
    pub evidence: Vec<EvidenceRef>,
    pub changed_from: Option<HypothesisId>,
    pub carried_forward: bool,
    pub invalid_output: bool,
}

impl Opinion {
    /// Union of item ids cited across all reasoning steps.
    pub fn cited_item_ids(&self) -> BTreeSet<ItemId> {
        self.reasoning_steps
            .iter()
            .flat_map(|s| s.cited_item_ids.iter().cloned())
            .collect()
    }

    /// Evidence this opinion brings to bear on `item`: entries cited by a step
    /// that cites the item, plus entries declared as applying to it.
    pub fn evidence_for_item(&self, item: &ItemId) -> Vec<&EvidenceRef> {
        let via_steps: BTreeSet<&EvidenceId> = self
            .reasoning_steps
            .iter()
            .filter(|s| s.cited_item_ids.contains(item))
            .flat_map(|s| s.cited_evidence_ids.iter())
            .collect();
        self.evidence
            .iter()
            .filter(|e| via_steps.contains(&e.evidence_id) || e.applies_to_item_ids.contains(item))
            .collect()
    }

    /// Copy of this opinion re-stamped for a later round.
    pub fn carried_to(&self, round_index: u32) -> Opinion {
        Opinion {
            round_index,
            carried_forward: true,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoundKind {
    Initial,
    Debate,
    Revision,
    ReEval,
}

impl RoundKind {
    pub fn is_targeted(self) -> bool {
        matches!(self, RoundKind::Revision | RoundKind::ReEval)
    }
}

impl fmt::Display for RoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum RoundTrigger {
    Intervention(InterventionId),
    Conflict(ConflictId),
}

/// An atomically committed set of opinions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub round_index: u32,
    pub kind: RoundKind,
    /// Agents queried this round, including any that abstained.
    pub spoke: BTreeSet<AgentId>,
    /// Queried agents whose output never validated.
    pub abstained: BTreeSet<AgentId>,
    /// One opinion per present agent, in session agent order.
    pub opinions: Vec<Opinion>,
    pub trigger: Option<RoundTrigger>,
}

impl Round {
    pub fn opinion(&self, agent: &AgentId) -> Option<&Opinion> {
        self.opinions.iter().find(|o| &o.agent_id == agent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intervention {
    pub intervention_id: InterventionId,
    pub selected_item_ids: BTreeSet<ItemId>,
    pub instruction: String,
    pub target_agent_ids: BTreeSet<AgentId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Configuring,
    Running,
    Paused,
    Converged,
    Terminated,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub phase: Phase,
    pub muted_agents: BTreeSet<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "agent_id", rename_all = "snake_case")]
pub enum ControlAction {
    Pause,
    Resume,
    Terminate,
    Mute(AgentId),
    Unmute(AgentId),
}
