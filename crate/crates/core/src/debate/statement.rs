//! Agent reply wire schema and its validation.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EvidenceRef, EvidenceSource, Opinion, ReasoningStep};
use crate::case::CaseRecord;
use crate::ids::{AgentId, EvidenceId, HypothesisId, ItemId};

/// The single JSON object an agent must reply with.
///
/// Unknown fields (for instance a self-reported "changed" flag) are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStatement {
    pub hypothesis: String,
    pub steps: Vec<StepWire>,
    pub summary: String,
    #[serde(default)]
    pub evidence: Vec<EvidenceWire>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepWire {
    pub text: String,
    #[serde(default)]
    pub items: Vec<String>,
    #[serde(default)]
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceWire {
    pub id: String,
    #[serde(rename = "type")]
    pub source_type: EvidenceSource,
    pub citation: String,
    #[serde(default)]
    pub snippet: String,
    #[serde(default)]
    pub items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail")]
pub enum ValidationReason {
    SchemaMismatch(String),
    UnknownItemReference(ItemId),
    UnknownEvidenceReference(EvidenceId),
    DuplicateEvidence(EvidenceId),
    EmptyHypothesis,
}

impl fmt::Display for ValidationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationReason::SchemaMismatch(d) => write!(f, "reply does not match the schema: {d}"),
            ValidationReason::UnknownItemReference(id) => {
                write!(f, "cited item {id} does not exist in the case")
            }
            ValidationReason::UnknownEvidenceReference(id) => {
                write!(f, "cited evidence {id} is not declared in \"evidence\"")
            }
            ValidationReason::DuplicateEvidence(id) => write!(f, "evidence id {id} declared twice"),
            ValidationReason::EmptyHypothesis => f.write_str("\"hypothesis\" must not be empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationFailure {
    pub reasons: Vec<ValidationReason>,
}

impl ValidationFailure {
    fn single(reason: ValidationReason) -> Self {
        ValidationFailure {
            reasons: vec![reason],
        }
    }

    /// Human-readable lines for a repair prompt.
    pub fn repair_lines(&self) -> Vec<String> {
        self.reasons.iter().map(|r| r.to_string()).collect()
    }
}

impl fmt::Display for ValidationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.repair_lines().join("; "))
    }
}

/// A reply that passed schema and reference checks but has not yet been
/// assigned a canonical hypothesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedStatement {
    pub hypothesis_label_raw: String,
    pub reasoning_steps: Vec<ReasoningStep>,
    pub summary: String,
    pub evidence: Vec<EvidenceRef>,
}

impl ParsedStatement {
    pub fn into_opinion(
        self,
        agent_id: AgentId,
        round_index: u32,
        hypothesis_id: HypothesisId,
        changed_from: Option<HypothesisId>,
    ) -> Opinion {
        Opinion {
            agent_id,
            round_index,
            hypothesis_id,
            hypothesis_label_raw: self.hypothesis_label_raw,
            reasoning_steps: self.reasoning_steps,
            summary: self.summary,
            evidence: self.evidence,
            changed_from,
            carried_forward: false,
            invalid_output: false,
        }
    }
}

/// Returns the outermost `{...}` span of `text`, tolerating code fences and
/// surrounding prose.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// Parses a raw reply and checks it against the case. All problems found are
/// reported together.
pub fn parse_statement(raw: &str, case: &CaseRecord) -> Result<ParsedStatement, ValidationFailure> {
    let json = extract_json_object(raw).ok_or_else(|| {
        ValidationFailure::single(ValidationReason::SchemaMismatch(
            "no JSON object found".into(),
        ))
    })?;
    let wire: AgentStatement = serde_json::from_str(json)
        .map_err(|e| ValidationFailure::single(ValidationReason::SchemaMismatch(e.to_string())))?;

    let mut reasons = Vec::new();
    if wire.hypothesis.trim().is_empty() {
        reasons.push(ValidationReason::EmptyHypothesis);
    }

    let check_item = |id: &str, reasons: &mut Vec<ValidationReason>| {
        let id = ItemId::new(id);
        if !case.contains(&id) {
            let reason = ValidationReason::UnknownItemReference(id.clone());
            if !reasons.contains(&reason) {
                reasons.push(reason);
            }
        }
        id
    };

    let mut declared = BTreeSet::new();
    let mut evidence = Vec::with_capacity(wire.evidence.len());
    for e in wire.evidence {
        let id = EvidenceId::new(e.id);
        if !declared.insert(id.clone()) {
            reasons.push(ValidationReason::DuplicateEvidence(id.clone()));
        }
        let applies: BTreeSet<ItemId> = e.items.iter().map(|i| check_item(i, &mut reasons)).collect();
        evidence.push(EvidenceRef {
            evidence_id: id,
            source_type: e.source_type,
            citation: e.citation,
            snippet: e.snippet,
            applies_to_item_ids: applies,
        });
    }

    let mut steps = Vec::with_capacity(wire.steps.len());
    for s in wire.steps {
        let items: BTreeSet<ItemId> = s.items.iter().map(|i| check_item(i, &mut reasons)).collect();
        let mut cited = BTreeSet::new();
        for e in s.evidence {
            let id = EvidenceId::new(e);
            if !declared.contains(&id) {
                let reason = ValidationReason::UnknownEvidenceReference(id.clone());
                if !reasons.contains(&reason) {
                    reasons.push(reason);
                }
            }
            cited.insert(id);
        }
        steps.push(ReasoningStep {
            text: s.text,
            cited_item_ids: items,
            cited_evidence_ids: cited,
        });
    }

    if !reasons.is_empty() {
        return Err(ValidationFailure { reasons });
    }
    Ok(ParsedStatement {
        hypothesis_label_raw: wire.hypothesis.trim().to_owned(),
        reasoning_steps: steps,
        summary: wire.summary,
        evidence,
    })
}
