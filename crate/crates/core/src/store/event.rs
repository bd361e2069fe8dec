use serde::{Deserialize, Serialize};

use crate::analysis::{Conflict, ConsensusSummary, RoundSummary};
use crate::case::{CaseRecord, ItemEdit};
use crate::debate::{
    AgentProfile, DebateConfig, Intervention, Opinion, RoundKind, RoundTrigger, ValidationReason,
};
use crate::ids::{AgentId, ConflictId};

/// Version stamped on every event line.
pub const EVENT_SCHEMA_VERSION: u32 = 1;

/// Kind-specific event payloads. Serializes as `{"kind": ..., "payload": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    SessionCreated {
        session_id: String,
        case: CaseRecord,
        agents: Vec<AgentProfile>,
        config: DebateConfig,
    },
    CaseItemEdited {
        edit: ItemEdit,
        revision: u64,
    },
    RoundStarted {
        round_index: u32,
        kind: RoundKind,
        targets: Vec<AgentId>,
        trigger: Option<RoundTrigger>,
    },
    StatementAccepted {
        agent_id: AgentId,
        attempt: u32,
        opinion: Opinion,
    },
    StatementRejected {
        agent_id: AgentId,
        attempt: u32,
        reasons: Vec<ValidationReason>,
        raw: String,
    },
    RoundCommitted {
        round_index: u32,
        summary: RoundSummary,
    },
    ConflictOpened {
        conflict: Conflict,
    },
    ConflictUpdated {
        conflict: Conflict,
    },
    ConflictResolved {
        conflict: Conflict,
    },
    InterventionSubmitted {
        intervention: Intervention,
    },
    ReEvalRequested {
        conflict_id: ConflictId,
        round_index: u32,
    },
    AgentMuted {
        agent_id: AgentId,
    },
    AgentUnmuted {
        agent_id: AgentId,
    },
    SessionPaused {},
    SessionResumed {},
    SessionTerminated {
        consensus: Option<ConsensusSummary>,
    },
}

impl EventBody {
    pub fn kind_name(&self) -> &'static str {
        match self {
            EventBody::SessionCreated { .. } => "SessionCreated",
            EventBody::CaseItemEdited { .. } => "CaseItemEdited",
            EventBody::RoundStarted { .. } => "RoundStarted",
            EventBody::StatementAccepted { .. } => "StatementAccepted",
            EventBody::StatementRejected { .. } => "StatementRejected",
            EventBody::RoundCommitted { .. } => "RoundCommitted",
            EventBody::ConflictOpened { .. } => "ConflictOpened",
            EventBody::ConflictUpdated { .. } => "ConflictUpdated",
            EventBody::ConflictResolved { .. } => "ConflictResolved",
            EventBody::InterventionSubmitted { .. } => "InterventionSubmitted",
            EventBody::ReEvalRequested { .. } => "ReEvalRequested",
            EventBody::AgentMuted { .. } => "AgentMuted",
            EventBody::AgentUnmuted { .. } => "AgentUnmuted",
            EventBody::SessionPaused {} => "SessionPaused",
            EventBody::SessionResumed {} => "SessionResumed",
            EventBody::SessionTerminated { .. } => "SessionTerminated",
        }
    }

    /// Events whose payload is derived analytics, checked on replay.
    pub fn is_conflict_event(&self) -> bool {
        matches!(
            self,
            EventBody::ConflictOpened { .. }
                | EventBody::ConflictUpdated { .. }
                | EventBody::ConflictResolved { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Milliseconds since the Unix epoch, from the session clock.
    pub ts: i64,
    #[serde(flatten)]
    pub body: EventBody,
}
