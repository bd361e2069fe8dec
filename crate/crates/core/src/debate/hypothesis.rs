use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::statement::ValidationReason;
use crate::ids::HypothesisId;

/// Number of distinct legend colors; color indices wrap around it.
pub const PALETTE_SIZE: u32 = 12;

/// Trim, case-fold and collapse internal whitespace.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisEntry {
    pub hypothesis_id: HypothesisId,
    pub display_label: String,
    pub color_index: u32,
    /// Normalized, alias-resolved label the entry is keyed by.
    pub canonical_label: String,
}

/// Session-wide hypothesis legend, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisRegistry {
    entries: Vec<HypothesisEntry>,
}

impl HypothesisRegistry {
    pub fn entries(&self) -> &[HypothesisEntry] {
        &self.entries
    }

    pub fn get(&self, id: &HypothesisId) -> Option<&HypothesisEntry> {
        self.entries.iter().find(|e| &e.hypothesis_id == id)
    }

    pub fn display<'a>(&'a self, id: &'a HypothesisId) -> &'a str {
        self.get(id).map_or(id.as_str(), |e| e.display_label.as_str())
    }

    /// Normalized label after alias substitution.
    pub fn canonical_key(
        label: &str,
        aliases: &BTreeMap<String, String>,
    ) -> Result<String, ValidationReason> {
        let norm = normalize_label(label);
        if norm.is_empty() {
            return Err(ValidationReason::EmptyHypothesis);
        }
        let target = aliases
            .iter()
            .find(|(from, _)| normalize_label(from) == norm)
            .map(|(_, to)| normalize_label(to));
        Ok(match target {
            Some(t) if !t.is_empty() => t,
            _ => norm,
        })
    }

    /// Existing id for `label`, without registering.
    pub fn lookup(
        &self,
        label: &str,
        aliases: &BTreeMap<String, String>,
    ) -> Result<Option<HypothesisId>, ValidationReason> {
        let key = Self::canonical_key(label, aliases)?;
        Ok(self
            .entries
            .iter()
            .find(|e| e.canonical_label == key)
            .map(|e| e.hypothesis_id.clone()))
    }

    /// Returns the id for `label`, registering it on first sighting.
    pub fn canonicalize(
        &mut self,
        label: &str,
        aliases: &BTreeMap<String, String>,
    ) -> Result<HypothesisId, ValidationReason> {
        let key = Self::canonical_key(label, aliases)?;
        if let Some(e) = self.entries.iter().find(|e| e.canonical_label == key) {
            return Ok(e.hypothesis_id.clone());
        }
        let n = self.entries.len() as u32;
        let id = HypothesisId::new(format!("h{}", n + 1));
        self.entries.push(HypothesisEntry {
            hypothesis_id: id.clone(),
            display_label: label.trim().to_owned(),
            color_index: n % PALETTE_SIZE,
            canonical_label: key,
        });
        Ok(id)
    }
}
