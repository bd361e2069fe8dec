use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CaseRecord, Category};
use crate::llm::{ChatClient, ChatError};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("extractor unavailable: {0}")]
    ExtractorUnavailable(String),
    #[error("extractor returned malformed items: {0}")]
    Malformed(String),
}

impl From<ChatError> for ExtractError {
    fn from(e: ChatError) -> Self {
        ExtractError::ExtractorUnavailable(e.to_string())
    }
}

/// An item as produced by an extractor, before id allocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawItem {
    pub category: Category,
    pub label: String,
    #[serde(default)]
    pub value: String,
    #[serde(default)]
    pub span: Option<(usize, usize)>,
}

impl RawItem {
    pub fn new(category: Category, label: impl Into<String>, value: impl Into<String>) -> Self {
        RawItem {
            category,
            label: label.into(),
            value: value.into(),
            span: None,
        }
    }

    fn spanned(mut self, span: (usize, usize)) -> Self {
        self.span = Some(span);
        self
    }
}

pub trait CaseExtractor {
    fn extract(&self, narrative: &str) -> Result<Vec<RawItem>, ExtractError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedCase {
    pub record: CaseRecord,
    pub warnings: Vec<String>,
}

/// Parses a free-form narrative into a draft record with allocated ids.
pub fn extract_case_items(
    narrative: &str,
    extractor: &dyn CaseExtractor,
) -> Result<ExtractedCase, ExtractError> {
    let raw = extractor.extract(narrative)?;
    let mut warnings = Vec::new();
    if narrative.trim().is_empty() {
        warnings.push("empty narrative: no items extracted".to_owned());
    }
    if raw
        .iter()
        .any(|i| i.category == Category::History && i.label == RESIDUAL_LABEL && i.span.is_none())
        && !narrative.trim().is_empty()
    {
        warnings.push("unclassified text kept as a History/narrative item".to_owned());
    }
    let case_id = format!("case-{}", uuid::Uuid::new_v4().simple());
    Ok(ExtractedCase {
        record: CaseRecord::from_raw(case_id, narrative, raw),
        warnings,
    })
}

pub(crate) const RESIDUAL_LABEL: &str = "narrative";

static SEPARATOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[;\n]|[.,](?:\s+|$)").unwrap());
static SECTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(demographics|symptoms?|exam(?:ination)?|history|labs?|laboratory|imaging)\s*:\s*")
        .unwrap()
});
static AGE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(\d{1,3})\s*-?\s*(?:years?|yrs?|y)\s*-?\s*old\b").unwrap()
});
static LEAD_IN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:presenting with|presents with|complaining of|with|reports)\s+").unwrap()
});
static SEX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(male|female|man|woman|boy|girl)\b").unwrap());
static IMAGING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(ct|mri|x-?ray|radiograph\w*|ultrasound|sonograph\w*|echocardiogra\w*|pet|endoscop\w*|colonoscop\w*|biopsy|scan|angiogra\w*)\b",
    )
    .unwrap()
});
static EXAM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(exam\w*|auscultation|palpation|tender\w*|murmur|bp|blood pressure|heart rate|pulse|hr|temperature|temp|spo2|respiratory rate|lymphadenopathy|hepatomegaly|splenomegaly|edema)\b",
    )
    .unwrap()
});
static HISTORY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(history|hx|prior|previous\w*|past|surgery|medication\w*|taking|smok\w*|alcohol|allerg\w*|family)\b",
    )
    .unwrap()
});
static SYMPTOM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(pain\w*|ache\w*|diarrh\w*|fevers?|febrile|cough\w*|fatigue|weight loss|nausea|vomit\w*|rash\w*|arthralg\w*|arthritis|dyspn\w*|headaches?|malaise|sweats|bloating|anorexia|jaundice|bleeding|itch\w*|weakness|dizziness|palpitations?|chills|constipation|syncope|confusion|seizures?)\b",
    )
    .unwrap()
});
static LAB: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(?P<label>[A-Za-z][A-Za-z0-9\-+/ ]{0,24}?)\s*(?::|=)?\s*(?P<value>[<>]?\s*\d+(?:\.\d+)?(?:\s*[:/]\s*\d+(?:\.\d+)?)?(?:\s*(?:%|[A-Za-zµμ]+(?:/[A-Za-zµμ0-9]+)*))?)$",
    )
    .unwrap()
});

/// Deterministic keyword/pattern extractor used offline and in tests.
///
/// The narrative is split into clauses at `;`, newlines and sentence or list
/// punctuation. Each clause is classified by the first matching rule; clauses
/// no rule recognises are concatenated into one History item labelled
/// `narrative`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedExtractor;

struct Clause<'a> {
    text: &'a str,
    start: usize,
}

impl RuleBasedExtractor {
    fn clauses(narrative: &str) -> Vec<Clause<'_>> {
        let mut out = Vec::new();
        let mut last = 0;
        let mut push = |from: usize, to: usize| {
            let seg = &narrative[from..to];
            let trimmed = seg.trim();
            if !trimmed.is_empty() {
                let lead = seg.len() - seg.trim_start().len();
                out.push(Clause {
                    text: trimmed,
                    start: from + lead,
                });
            }
        };
        for m in SEPARATOR.find_iter(narrative) {
            push(last, m.start());
            last = m.end();
        }
        push(last, narrative.len());
        out
    }

    fn classify(clause: &Clause<'_>, narrative: &str) -> Vec<RawItem> {
        let span = |from: usize, to: usize| (char_offset(narrative, from), char_offset(narrative, to));
        let whole = span(clause.start, clause.start + clause.text.len());

        if let Some(m) = SECTION.captures(clause.text) {
            let header = m.get(1).unwrap().as_str().to_ascii_lowercase();
            let category = match header.as_str() {
                h if h.starts_with("demo") => Category::Demographics,
                h if h.starts_with("sym") => Category::Symptoms,
                h if h.starts_with("exam") => Category::Exam,
                "history" => Category::History,
                "imaging" => Category::Imaging,
                _ => Category::Labs,
            };
            let rest = clause.text[m.get(0).unwrap().end()..].trim();
            if rest.is_empty() {
                return Vec::new();
            }
            let (label, value) = split_label_value(rest);
            return vec![RawItem::new(category, label, value).spanned(whole)];
        }

        let mut items = Vec::new();
        if let Some(c) = AGE.captures(clause.text) {
            let m = c.get(0).unwrap();
            items.push(
                RawItem::new(Category::Demographics, "age", c.get(1).unwrap().as_str())
                    .spanned(span(clause.start + m.start(), clause.start + m.end())),
            );
        }
        if let Some(c) = SEX.captures(clause.text) {
            let m = c.get(0).unwrap();
            let sex = match m.as_str().to_ascii_lowercase().as_str() {
                "male" | "man" | "boy" => "male",
                _ => "female",
            };
            items.push(
                RawItem::new(Category::Demographics, "sex", sex)
                    .spanned(span(clause.start + m.start(), clause.start + m.end())),
            );
        }
        if !items.is_empty() {
            // "62-year-old male with chronic diarrhea": classify the tail too.
            if let Some(m) = LEAD_IN.find(clause.text) {
                let tail = Clause {
                    text: clause.text[m.end()..].trim(),
                    start: clause.start + m.end(),
                };
                if !tail.text.is_empty() {
                    items.extend(Self::classify(&tail, narrative));
                }
            }
            return items;
        }

        let category = if IMAGING.is_match(clause.text) {
            Category::Imaging
        } else if EXAM.is_match(clause.text) {
            Category::Exam
        } else if HISTORY.is_match(clause.text) {
            Category::History
        } else if SYMPTOM.is_match(clause.text) {
            return vec![RawItem::new(Category::Symptoms, clause.text, "").spanned(whole)];
        } else if LAB.is_match(clause.text) {
            Category::Labs
        } else {
            return Vec::new();
        };
        let (label, value) = split_label_value(clause.text);
        vec![RawItem::new(category, label, value).spanned(whole)]
    }
}

fn split_label_value(text: &str) -> (String, String) {
    if let Some(c) = LAB.captures(text) {
        return (
            c["label"].trim().to_owned(),
            c["value"].trim().to_owned(),
        );
    }
    match text.split_once(':') {
        Some((label, value)) if !label.trim().is_empty() => {
            (label.trim().to_owned(), value.trim().to_owned())
        }
        _ => (text.to_owned(), String::new()),
    }
}

fn char_offset(s: &str, byte: usize) -> usize {
    s[..byte].chars().count()
}

impl CaseExtractor for RuleBasedExtractor {
    fn extract(&self, narrative: &str) -> Result<Vec<RawItem>, ExtractError> {
        let mut items = Vec::new();
        let mut residual = Vec::new();
        for clause in Self::clauses(narrative) {
            let found = Self::classify(&clause, narrative);
            if found.is_empty() {
                residual.push(clause.text);
            }
            items.extend(found);
        }
        if !residual.is_empty() {
            let text = if items.is_empty() {
                narrative.trim().to_owned()
            } else {
                residual.join("; ")
            };
            items.push(RawItem::new(Category::History, RESIDUAL_LABEL, text));
        }
        Ok(items)
    }
}

/// Extractor backed by a chat-completion endpoint.
///
/// The model is asked for `{"items": [{"category", "label", "value"}]}`;
/// categories outside the fixed six are rejected as malformed.
pub struct LiveExtractor {
    client: ChatClient,
}

const EXTRACTION_PROMPT: &str = "You convert clinical case narratives into structured data items. \
Reply with a single JSON object {\"items\": [{\"category\": one of \"Demographics\", \"Symptoms\", \"Exam\", \"History\", \"Labs\", \"Imaging\", \"label\": short name, \"value\": value with units or empty string}]}. \
Do not drop any information: put anything you cannot classify into one History item labelled \"narrative\".";

#[derive(Deserialize)]
struct LiveItems {
    items: Vec<RawItem>,
}

impl LiveExtractor {
    pub fn new(client: ChatClient) -> Self {
        LiveExtractor { client }
    }
}

impl CaseExtractor for LiveExtractor {
    fn extract(&self, narrative: &str) -> Result<Vec<RawItem>, ExtractError> {
        if narrative.trim().is_empty() {
            return Ok(Vec::new());
        }
        let reply = self.client.complete(EXTRACTION_PROMPT, narrative)?;
        let json = crate::debate::extract_json_object(&reply)
            .ok_or_else(|| ExtractError::Malformed("no JSON object in reply".into()))?;
        let parsed: LiveItems =
            serde_json::from_str(json).map_err(|e| ExtractError::Malformed(e.to_string()))?;
        Ok(parsed
            .items
            .into_iter()
            .filter(|i| !i.label.trim().is_empty())
            .map(|i| RawItem { span: None, ..i })
            .collect())
    }
}
