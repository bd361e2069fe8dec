//! Agent transports: how a context bundle becomes a raw reply.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AgentProfile, RoundKind};
use crate::case::CaseItem;
use crate::ids::{AgentId, ConflictId, ItemId};
use crate::llm::ChatClient;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("{0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpinionDigest {
    pub agent_id: AgentId,
    pub specialty: String,
    pub hypothesis: String,
    pub summary: String,
    pub cited_item_ids: BTreeSet<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictBrief {
    pub conflict_id: ConflictId,
    pub hypotheses: [String; 2],
    pub contested_item_ids: BTreeSet<ItemId>,
}

/// Everything an agent is shown for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub round_index: u32,
    pub kind: RoundKind,
    pub agent_id: AgentId,
    pub role_prompt: String,
    pub case_items: Vec<CaseItem>,
    /// Latest opinions of all present agents; empty for the initial round.
    pub prior_opinions: Vec<OpinionDigest>,
    /// Revision rounds only.
    pub highlighted_item_ids: BTreeSet<ItemId>,
    pub instruction: Option<String>,
    /// Re-evaluation rounds only.
    pub conflict: Option<ConflictBrief>,
    /// 0 for the first query, n for the n-th repair.
    pub attempt: u32,
    pub repair_reasons: Vec<String>,
}

pub trait AgentTransport: Send + Sync {
    fn complete(&self, agent: &AgentProfile, bundle: &ContextBundle) -> Result<String, TransportError>;
}

/// Closure-backed transport, mostly for tests and simulations.
pub struct FnTransport<F>(pub F);

impl<F> AgentTransport for FnTransport<F>
where
    F: Fn(&AgentProfile, &ContextBundle) -> Result<String, TransportError> + Send + Sync,
{
    fn complete(&self, agent: &AgentProfile, bundle: &ContextBundle) -> Result<String, TransportError> {
        (self.0)(agent, bundle)
    }
}

/// Replays fixture replies from `<dir>/<agent_id>/<round_index>.json`.
///
/// Repair attempt `n` first looks for `<round_index>.r<n>.json` and falls
/// back to the base file. A missing base file is a transport failure.
#[derive(Debug, Clone)]
pub struct ScriptedTransport {
    dir: PathBuf,
}

impl ScriptedTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ScriptedTransport { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn fixture_path(&self, agent: &AgentId, round: u32, attempt: u32) -> PathBuf {
        let agent_dir = self.dir.join(agent.as_str());
        if attempt > 0 {
            let repair = agent_dir.join(format!("{round}.r{attempt}.json"));
            if repair.is_file() {
                return repair;
            }
        }
        agent_dir.join(format!("{round}.json"))
    }
}

impl AgentTransport for ScriptedTransport {
    fn complete(&self, agent: &AgentProfile, bundle: &ContextBundle) -> Result<String, TransportError> {
        let path = self.fixture_path(&agent.agent_id, bundle.round_index, bundle.attempt);
        std::fs::read_to_string(&path)
            .map_err(|e| TransportError::Unavailable(format!("fixture {}: {e}", path.display())))
    }
}

const SCHEMA_INSTRUCTIONS: &str = r#"Reply with a single JSON object and nothing else:
{"hypothesis": "<your leading diagnosis>",
 "steps": [{"text": "<one reasoning step>", "items": ["<case item id>"], "evidence": ["<evidence id>"]}],
 "summary": "<one or two sentences>",
 "evidence": [{"id": "<evidence id>", "type": "guideline" | "literature", "citation": "<source>", "snippet": "<what it says>", "items": ["<case item id>"]}]}
Only cite item ids listed in the case and evidence ids you declare."#;

/// Renders the (system, user) message pair for a chat endpoint.
pub fn render_prompt(agent: &AgentProfile, bundle: &ContextBundle) -> (String, String) {
    let system = format!("{}\n\n{}", bundle.role_prompt, SCHEMA_INSTRUCTIONS);
    let mut user = String::new();
    let _ = writeln!(user, "Round {} ({}), {}.", bundle.round_index, bundle.kind, agent.specialty);
    user.push_str("\nCase items:\n");
    for item in &bundle.case_items {
        let marker = if bundle.highlighted_item_ids.contains(&item.id) { " [highlighted]" } else { "" };
        let _ = writeln!(user, "- {} [{}] {}: {}{}", item.id, item.category, item.label, item.value, marker);
    }
    if !bundle.prior_opinions.is_empty() {
        user.push_str("\nCurrent opinions of the team:\n");
        for d in &bundle.prior_opinions {
            let cited: Vec<&str> = d.cited_item_ids.iter().map(|i| i.as_str()).collect();
            let _ = writeln!(
                user,
                "- {} ({}): {}: {} [items: {}]",
                d.agent_id,
                d.specialty,
                d.hypothesis,
                d.summary,
                cited.join(", ")
            );
        }
    }
    if let Some(instruction) = &bundle.instruction {
        let _ = writeln!(user, "\nClinician instruction: {instruction}");
    }
    if let Some(c) = &bundle.conflict {
        let items: Vec<&str> = c.contested_item_ids.iter().map(|i| i.as_str()).collect();
        let _ = writeln!(
            user,
            "\nRe-evaluate the disagreement {}: \"{}\" vs \"{}\" over items {}.",
            c.conflict_id,
            c.hypotheses[0],
            c.hypotheses[1],
            items.join(", ")
        );
    }
    if !bundle.repair_reasons.is_empty() {
        user.push_str("\nYour previous reply was rejected:\n");
        for r in &bundle.repair_reasons {
            let _ = writeln!(user, "- {r}");
        }
        user.push_str("Reply again with a corrected JSON object.\n");
    }
    (system, user)
}

/// Transport backed by a chat-completion endpoint.
pub struct LiveTransport {
    client: ChatClient,
}

impl LiveTransport {
    pub fn new(client: ChatClient) -> Self {
        LiveTransport { client }
    }
}

impl AgentTransport for LiveTransport {
    fn complete(&self, agent: &AgentProfile, bundle: &ContextBundle) -> Result<String, TransportError> {
        let (system, user) = render_prompt(agent, bundle);
        self.client
            .complete(&system, &user)
            .map_err(|e| TransportError::Unavailable(e.to_string()))
    }
}
