use std::collections::{BTreeMap, BTreeSet};

use mdtroom_core::analysis::compute_hypothesis_flow;
use mdtroom_core::debate::{HypothesisRegistry, Round};
use mdtroom_core::ids::{AgentId, HypothesisId, ItemId};
use mdtroom_core::store::EventBody;
use mdtroom_core::testkit::{pool_aliases, simulate, SimParams, HYPOTHESIS_POOL};
use proptest::prelude::*;

type Pair = (HypothesisId, HypothesisId);

/// Brute force over every agent pair: differing hypotheses with at least one
/// cited item in common.
fn oracle(round: &Round) -> BTreeMap<Pair, (BTreeSet<AgentId>, BTreeSet<ItemId>)> {
    let mut out: BTreeMap<Pair, (BTreeSet<AgentId>, BTreeSet<ItemId>)> = BTreeMap::new();
    let ops = &round.opinions;
    for i in 0..ops.len() {
        for j in 0..ops.len() {
            let (a, b) = (&ops[i], &ops[j]);
            if i == j || a.hypothesis_id == b.hypothesis_id {
                continue;
            }
            let shared: BTreeSet<ItemId> = a
                .cited_item_ids()
                .intersection(&b.cited_item_ids())
                .cloned()
                .collect();
            if shared.is_empty() {
                continue;
            }
            let key = if a.hypothesis_id < b.hypothesis_id {
                (a.hypothesis_id.clone(), b.hypothesis_id.clone())
            } else {
                (b.hypothesis_id.clone(), a.hypothesis_id.clone())
            };
            let entry = out.entry(key).or_default();
            entry.0.insert(a.agent_id.clone());
            entry.0.insert(b.agent_id.clone());
            entry.1.extend(shared);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn active_conflicts_match_pairwise_oracle(seed in any::<u64>()) {
        let run = simulate(seed, &SimParams::default());
        for (_, state) in &run.snapshots {
            let Some(round) = state.rounds.last() else { continue };
            let expected = oracle(round);
            let active: BTreeMap<Pair, _> = state
                .conflicts
                .iter()
                .filter(|c| c.is_active())
                .map(|c| ((c.hypothesis_pair[0].clone(), c.hypothesis_pair[1].clone()), c))
                .collect();
            prop_assert_eq!(
                active.keys().collect::<Vec<_>>(),
                expected.keys().collect::<Vec<_>>()
            );
            for (pair, (agents, items)) in &expected {
                let c = active[pair];
                prop_assert!(agents.is_subset(&c.involved_agents));
                prop_assert!(items.is_subset(&c.contested_item_ids));
            }
        }
    }

    #[test]
    fn flow_conserves_support(seed in any::<u64>()) {
        let run = simulate(seed, &SimParams::default());
        let state = run.session.state();
        let Ok(edges) = compute_hypothesis_flow(state) else {
            prop_assert!(state.rounds.len() < 2);
            return Ok(());
        };
        let mut outgoing: BTreeMap<(u32, HypothesisId), u32> = BTreeMap::new();
        for e in &edges {
            prop_assert_eq!(e.to.round_index, e.from.round_index + 1);
            *outgoing.entry((e.from.round_index, e.from.hypothesis_id.clone())).or_default() += e.weight;
        }
        for pair in state.rounds.windows(2) {
            let mut restricted: BTreeMap<(u32, HypothesisId), u32> = BTreeMap::new();
            for o in &pair[0].opinions {
                if pair[1].opinion(&o.agent_id).is_some() {
                    *restricted.entry((pair[0].round_index, o.hypothesis_id.clone())).or_default() += 1;
                }
            }
            let ours: BTreeMap<_, _> = outgoing
                .iter()
                .filter(|((r, _), _)| *r == pair[0].round_index)
                .map(|(k, v)| (k.clone(), *v))
                .collect();
            prop_assert_eq!(ours, restricted);
        }
    }

    #[test]
    fn recorded_summaries_count_support(seed in any::<u64>()) {
        let run = simulate(seed, &SimParams::default());
        let state = run.session.state();
        for e in run.session.log().events() {
            if let EventBody::RoundCommitted { round_index, summary } = &e.body {
                let round = &state.rounds[*round_index as usize];
                let total: u32 = summary.support.values().sum();
                prop_assert_eq!(total as usize, round.opinions.len());
            }
        }
    }

    #[test]
    fn canonicalization_is_idempotent(label in "[ A-Za-z.]{0,24}") {
        let aliases = pool_aliases();
        if let Ok(key) = HypothesisRegistry::canonical_key(&label, &aliases) {
            prop_assert_eq!(HypothesisRegistry::canonical_key(&key, &aliases).unwrap(), key.clone());
            let mut reg = HypothesisRegistry::default();
            let a = reg.canonicalize(&label, &aliases).unwrap();
            let b = reg.canonicalize(&label, &aliases).unwrap();
            let c = reg.canonicalize(&key, &aliases).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(&a, &c);
            prop_assert_eq!(reg.entries().len(), 1);
        } else {
            prop_assert!(label.trim().is_empty());
        }
    }
}

#[test]
fn pool_variants_share_an_id() {
    let aliases = pool_aliases();
    let mut reg = HypothesisRegistry::default();
    for (k, variants) in HYPOTHESIS_POOL.iter().enumerate() {
        for v in variants.iter() {
            let id = reg.canonicalize(v, &aliases).unwrap();
            assert_eq!(id, HypothesisId::new(format!("h{}", k + 1)), "{v}");
        }
    }
    assert_eq!(reg.entries().len(), 4);
}

#[test]
fn generator_exercises_conflicts() {
    let params = SimParams::default();
    let (mut opened, mut resolved, mut superseding) = (0, 0, 0);
    for seed in 0..200 {
        let run = simulate(seed, &params);
        for c in &run.session.state().conflicts {
            opened += 1;
            resolved += usize::from(!c.is_active());
            superseding += usize::from(c.supersedes.is_some());
        }
    }
    assert!(opened > 100 && resolved > 20 && superseding > 0, "{opened} {resolved} {superseding}");
}
