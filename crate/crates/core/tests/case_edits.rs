use std::collections::BTreeSet;

use mdtroom_core::case::{apply_item_edit, CaseItem, CaseRecord, Category, ItemEdit};
use mdtroom_core::ids::ItemId;
use proptest::prelude::*;

fn seed_case() -> CaseRecord {
    let items = (1..=3)
        .map(|k| CaseItem {
            id: ItemId::new(format!("i{k}")),
            category: Category::Labs,
            label: format!("lab {k}"),
            value: String::new(),
            span: None,
        })
        .collect();
    CaseRecord::new("c", "n", items)
}

#[derive(Debug, Clone)]
enum Op {
    Add,
    Remove(usize),
    Update(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        Just(Op::Add),
        (0usize..8).prop_map(Op::Remove),
        (0usize..8).prop_map(Op::Update),
    ]
}

fn numeric(id: &ItemId) -> u64 {
    id.as_str()[1..].parse().unwrap()
}

proptest! {
    #[test]
    fn item_ids_are_never_reused(ops in prop::collection::vec(op(), 0..=50)) {
        let mut case = seed_case();
        let mut ever: BTreeSet<ItemId> = case.item_ids().cloned().collect();
        let mut high = 3;
        for op in ops {
            let ids: Vec<ItemId> = case.item_ids().cloned().collect();
            let edit = match op {
                Op::Add => ItemEdit::Add { category: Category::Exam, label: "x".into(), value: String::new() },
                Op::Remove(k) if !ids.is_empty() => ItemEdit::Remove { id: ids[k % ids.len()].clone() },
                Op::Update(k) if !ids.is_empty() => ItemEdit::Update {
                    id: ids[k % ids.len()].clone(),
                    category: None,
                    label: Some("y".into()),
                    value: None,
                },
                _ => continue,
            };
            let before = case.clone();
            case = apply_item_edit(&case, &edit).unwrap();
            prop_assert_eq!(case.revision, before.revision + 1);
            for item in &case.items {
                if !before.contains(&item.id) {
                    prop_assert!(ever.insert(item.id.clone()), "{} handed out twice", item.id);
                    prop_assert!(numeric(&item.id) > high);
                    high = numeric(&item.id);
                }
            }
            // untouched items keep their content
            for item in &before.items {
                if edit.target() != Some(&item.id) {
                    prop_assert_eq!(case.item(&item.id), Some(item));
                }
            }
        }
    }
}
