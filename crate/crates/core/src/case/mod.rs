//! Structured patient case: the shared set of data items every agent cites.

mod extract;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::ItemId;

pub use extract::{
    extract_case_items, CaseExtractor, ExtractError, ExtractedCase, LiveExtractor, RawItem,
    RuleBasedExtractor,
};

/// Version of the case wire schema.
pub const CASE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CaseError {
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("invalid category {0:?}")]
    InvalidCategory(String),
    #[error("item label must not be empty")]
    EmptyLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Category {
    Demographics,
    Symptoms,
    Exam,
    History,
    Labs,
    Imaging,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Demographics,
        Category::Symptoms,
        Category::Exam,
        Category::History,
        Category::Labs,
        Category::Imaging,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Demographics => "Demographics",
            Category::Symptoms => "Symptoms",
            Category::Exam => "Exam",
            Category::History => "History",
            Category::Labs => "Labs",
            Category::Imaging => "Imaging",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = CaseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CaseError::InvalidCategory(s.to_owned()))
    }
}

impl TryFrom<String> for Category {
    type Error = CaseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Category> for String {
    fn from(c: Category) -> String {
        c.as_str().to_owned()
    }
}

/// One structured patient datum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseItem {
    pub id: ItemId,
    pub category: Category,
    pub label: String,
    #[serde(default)]
    pub value: String,
    /// Character range `[start, end)` into the narrative this item was read from.
    #[serde(default)]
    pub span: Option<(usize, usize)>,
}

/// A patient case as a narrative plus its editable structured items.
///
/// Serializes to the case wire schema. `next_id` is the monotone allocator
/// state; ids are never handed out twice even after removal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    #[serde(default = "schema_version")]
    pub v: u32,
    pub case_id: String,
    pub narrative: String,
    pub revision: u64,
    pub items: Vec<CaseItem>,
    #[serde(default)]
    next_id: u64,
}

fn schema_version() -> u32 {
    CASE_SCHEMA_VERSION
}

impl CaseRecord {
    /// Builds a record from already-identified items.
    pub fn new(case_id: impl Into<String>, narrative: impl Into<String>, items: Vec<CaseItem>) -> Self {
        let mut record = CaseRecord {
            v: CASE_SCHEMA_VERSION,
            case_id: case_id.into(),
            narrative: narrative.into(),
            revision: 0,
            items,
            next_id: 0,
        };
        record.next_id = record.max_numeric_id() + 1;
        record
    }

    /// Builds a record allocating `i1..iN` in order.
    pub fn from_raw(
        case_id: impl Into<String>,
        narrative: impl Into<String>,
        raw: impl IntoIterator<Item = RawItem>,
    ) -> Self {
        let mut record = CaseRecord::new(case_id, narrative, Vec::new());
        for item in raw {
            let id = record.allocate_id();
            record.items.push(CaseItem {
                id,
                category: item.category,
                label: item.label,
                value: item.value,
                span: item.span,
            });
        }
        record
    }

    /// Normalizes allocator state after deserializing a record that predates it.
    pub fn normalized(mut self) -> Self {
        self.next_id = self.next_id.max(self.max_numeric_id() + 1);
        self
    }

    pub fn item(&self, id: &ItemId) -> Option<&CaseItem> {
        self.items.iter().find(|i| &i.id == id)
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.item(id).is_some()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &ItemId> {
        self.items.iter().map(|i| &i.id)
    }

    /// The next id `Add` would allocate.
    /// A record read without allocator state still never reissues an id
    /// that is present.
    fn next_numeric_id(&self) -> u64 {
        self.next_id.max(self.max_numeric_id() + 1)
    }

    pub fn next_item_id(&self) -> ItemId {
        ItemId::new(format!("i{}", self.next_numeric_id()))
    }

    fn allocate_id(&mut self) -> ItemId {
        let n = self.next_numeric_id();
        self.next_id = n + 1;
        ItemId::new(format!("i{n}"))
    }

    fn max_numeric_id(&self) -> u64 {
        self.items
            .iter()
            .filter_map(|i| i.id.as_str().strip_prefix('i')?.parse::<u64>().ok())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ItemEdit {
    Add {
        category: Category,
        label: String,
        #[serde(default)]
        value: String,
    },
    Update {
        id: ItemId,
        #[serde(default)]
        category: Option<Category>,
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        value: Option<String>,
    },
    Remove {
        id: ItemId,
    },
}

impl ItemEdit {
    pub fn target(&self) -> Option<&ItemId> {
        match self {
            ItemEdit::Add { .. } => None,
            ItemEdit::Update { id, .. } | ItemEdit::Remove { id } => Some(id),
        }
    }
}

/// Applies one edit, returning the next revision. The input is untouched.
pub fn apply_item_edit(record: &CaseRecord, edit: &ItemEdit) -> Result<CaseRecord, CaseError> {
    let mut next = record.clone();
    match edit {
        ItemEdit::Add {
            category,
            label,
            value,
        } => {
            if label.trim().is_empty() {
                return Err(CaseError::EmptyLabel);
            }
            let id = next.allocate_id();
            next.items.push(CaseItem {
                id,
                category: *category,
                label: label.clone(),
                value: value.clone(),
                span: None,
            });
        }
        ItemEdit::Update {
            id,
            category,
            label,
            value,
        } => {
            let item = next
                .items
                .iter_mut()
                .find(|i| &i.id == id)
                .ok_or_else(|| CaseError::UnknownItem(id.clone()))?;
            if let Some(label) = label {
                if label.trim().is_empty() {
                    return Err(CaseError::EmptyLabel);
                }
                item.label = label.clone();
            }
            if let Some(category) = category {
                item.category = *category;
            }
            if let Some(value) = value {
                item.value = value.clone();
            }
        }
        ItemEdit::Remove { id } => {
            let pos = next
                .items
                .iter()
                .position(|i| &i.id == id)
                .ok_or_else(|| CaseError::UnknownItem(id.clone()))?;
            next.items.remove(pos);
        }
    }
    next.revision += 1;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "item", rename_all = "snake_case")]
pub enum Violation {
    EmptyCase,
    EmptyLabel(ItemId),
    DuplicateId(ItemId),
    SpanOutOfBounds(ItemId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyCase => f.write_str("empty case"),
            Violation::EmptyLabel(id) => write!(f, "empty label on {id}"),
            Violation::DuplicateId(id) => write!(f, "duplicate id {id}"),
            Violation::SpanOutOfBounds(id) => write!(f, "span out of bounds on {id}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

pub fn validate_case(record: &CaseRecord) -> ValidationReport {
    let mut violations = Vec::new();
    if record.items.is_empty() {
        violations.push(Violation::EmptyCase);
    }
    let narrative_len = record.narrative.chars().count();
    let mut seen = HashSet::new();
    for item in &record.items {
        if !seen.insert(&item.id) {
            violations.push(Violation::DuplicateId(item.id.clone()));
        }
        if item.label.trim().is_empty() {
            violations.push(Violation::EmptyLabel(item.id.clone()));
        }
        if let Some((start, end)) = item.span {
            if start > end || end > narrative_len {
                violations.push(Violation::SpanOutOfBounds(item.id.clone()));
            }
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_items() -> CaseRecord {
        CaseRecord::from_raw(
            "case-1",
            "62-year-old male; chronic diarrhea; CRP 48 mg/L",
            [
                RawItem::new(Category::Demographics, "age", "62"),
                RawItem::new(Category::Demographics, "sex", "male"),
                RawItem::new(Category::Symptoms, "chronic diarrhea", ""),
                RawItem::new(Category::Labs, "CRP", "48 mg/L"),
            ],
        )
    }

    fn ids(record: &CaseRecord) -> Vec<&str> {
        record.items.iter().map(|i| i.id.as_str()).collect()
    }

    #[test]
    fn remove_drops_item_and_bumps_revision() {
        let r = CaseRecord::from_raw(
            "c",
            "",
            [
                RawItem::new(Category::Labs, "a", ""),
                RawItem::new(Category::Labs, "b", ""),
                RawItem::new(Category::Labs, "c", ""),
            ],
        );
        let next = apply_item_edit(&r, &ItemEdit::Remove { id: "i3".into() }).unwrap();
        assert_eq!(ids(&next), ["i1", "i2"]);
        assert_eq!(next.revision, r.revision + 1);
    }

    #[test]
    fn add_after_remove_never_reuses_id() {
        let r = CaseRecord::from_raw(
            "c",
            "",
            [
                RawItem::new(Category::Labs, "a", ""),
                RawItem::new(Category::Labs, "b", ""),
                RawItem::new(Category::Labs, "c", ""),
            ],
        );
        let r = apply_item_edit(&r, &ItemEdit::Remove { id: "i3".into() }).unwrap();
        let r = apply_item_edit(
            &r,
            &ItemEdit::Add {
                category: Category::Labs,
                label: "ANA".into(),
                value: "1:320".into(),
            },
        )
        .unwrap();
        assert_eq!(ids(&r), ["i1", "i2", "i4"]);
    }

    #[test]
    fn update_touches_only_target() {
        let r = four_items();
        let next = apply_item_edit(
            &r,
            &ItemEdit::Update {
                id: "i1".into(),
                category: None,
                label: None,
                value: Some("63".into()),
            },
        )
        .unwrap();
        assert_eq!(next.items[0].value, "63");
        assert_eq!(next.items[1..], r.items[1..]);
        assert_eq!(next.narrative, r.narrative);
    }

    #[test]
    fn unknown_target_is_rejected() {
        let r = four_items();
        let err = apply_item_edit(&r, &ItemEdit::Remove { id: "i9".into() }).unwrap_err();
        assert_eq!(err, CaseError::UnknownItem("i9".into()));
    }

    #[test]
    fn category_parsing() {
        assert_eq!("labs".parse::<Category>().unwrap(), Category::Labs);
        assert_eq!(
            "Radiology".parse::<Category>().unwrap_err(),
            CaseError::InvalidCategory("Radiology".into())
        );
        let bad: Result<CaseItem, _> = serde_json::from_str(
            r#"{"id":"i1","category":"Vitals","label":"x","value":"","span":null}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn validation_findings() {
        assert!(validate_case(&four_items()).is_valid());

        let empty = CaseRecord::new("c", "", vec![]);
        assert_eq!(validate_case(&empty).violations, [Violation::EmptyCase]);
        assert_eq!(validate_case(&empty).to_string(), "empty case");

        let mut dup = four_items();
        dup.items[1].id = "i1".into();
        let report = validate_case(&dup);
        assert_eq!(report.violations, [Violation::DuplicateId("i1".into())]);
        assert_eq!(report.to_string(), "duplicate id i1");
    }

    #[test]
    fn wire_schema_shape() {
        let r = four_items();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["v"], 1);
        assert_eq!(json["items"][3]["category"], "Labs");
        assert_eq!(json["items"][3]["id"], "i4");
        assert!(json["items"][0]["span"].is_null());
        let back: CaseRecord = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }
}
