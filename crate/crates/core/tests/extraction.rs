use std::path::PathBuf;

use mdtroom_core::case::{extract_case_items, validate_case, Category, RuleBasedExtractor};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn rule_based_extraction_matches_golden() {
    let narrative = std::fs::read_to_string(fixture("whipple_narrative.txt")).unwrap();
    let extracted = extract_case_items(&narrative, &RuleBasedExtractor).unwrap();
    let got = serde_json::to_value(&extracted.record.items).unwrap();
    let golden_path = fixture("whipple_items.golden.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden_path, serde_json::to_string_pretty(&got).unwrap() + "\n").unwrap();
    }
    let want: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&golden_path).unwrap()).unwrap();
    assert_eq!(got, want);
    assert!(validate_case(&extracted.record).is_valid());
}

#[test]
fn reference_narrative_yields_expected_items() {
    let out = extract_case_items(
        "62-year-old male with chronic diarrhea. CRP 48 mg/L.",
        &RuleBasedExtractor,
    )
    .unwrap();
    let items = &out.record.items;
    let find = |c: Category, label: &str| {
        items
            .iter()
            .find(|i| i.category == c && i.label == label)
            .unwrap_or_else(|| panic!("no {c:?} {label} in {items:#?}"))
    };
    assert_eq!(find(Category::Demographics, "age").value, "62");
    assert_eq!(find(Category::Demographics, "sex").value, "male");
    find(Category::Symptoms, "chronic diarrhea");
    assert_eq!(find(Category::Labs, "CRP").value, "48 mg/L");
}

proptest! {
    #[test]
    fn extraction_is_pure(narrative in "[ -~\n]{0,200}") {
        let a = extract_case_items(&narrative, &RuleBasedExtractor).unwrap();
        let b = extract_case_items(&narrative, &RuleBasedExtractor).unwrap();
        prop_assert_eq!(&a.record.items, &b.record.items);
        prop_assert_eq!(&a.warnings, &b.warnings);
    }

    #[test]
    fn spans_stay_inside_the_narrative(narrative in "[ -~\n\u{e9}\u{3bc}]{0,200}") {
        let out = extract_case_items(&narrative, &RuleBasedExtractor).unwrap();
        let len = narrative.chars().count();
        for item in &out.record.items {
            if let Some((start, end)) = item.span {
                prop_assert!(start <= end && end <= len, "{:?} outside 0..{}", item.span, len);
            }
        }
        prop_assert!(validate_case(&out.record).is_valid() || narrative.trim().is_empty());
    }

    #[test]
    fn non_empty_narrative_never_loses_text(narrative in "[a-z]{1,10}( [a-z]{1,10}){0,8}") {
        let out = extract_case_items(&narrative, &RuleBasedExtractor).unwrap();
        prop_assert!(!out.record.items.is_empty());
    }
}
