//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Everything runs through the scripted or simulated
//! transports; no UI is involved.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{check_golden, fixtures, malformed_spec, run_lifecycle};
use mdtroom_cli::{export, replay, run, ExportFormat};
use mdtroom_core::analysis::{compute_hypothesis_flow, convergence_of, item_flag, LifecycleKind};
use mdtroom_core::debate::{Opinion, Round, RoundKind};
use mdtroom_core::ids::{AgentId, HypothesisId, ItemId};
use mdtroom_core::store::{
    decode_log, encode_log, load_session, Event, EventBody, EventLog, FoldTarget,
};
use mdtroom_core::testkit::{simulate, SimParams, SimRun};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_SESSIONS: u64 = 1000;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const PROPERTY_SESSIONS: u64 = 300;
const TRUNCATIONS: usize = 200;
const MUTATIONS_PER_LOG: usize = 4;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sessions(n: u64) -> impl Iterator<Item = SimRun> {
    let params = SimParams::default();
    (0..n).map(move |seed| simulate(seed, &params))
}

/// Pairs of differing hypotheses held by two agents citing a common item.
fn pairwise_oracle(round: &Round) -> BTreeSet<(HypothesisId, HypothesisId)> {
    let mut out = BTreeSet::new();
    for a in &round.opinions {
        for b in &round.opinions {
            if a.hypothesis_id >= b.hypothesis_id {
                continue;
            }
            if a.cited_item_ids().intersection(&b.cited_item_ids()).next().is_some() {
                out.insert((a.hypothesis_id.clone(), b.hypothesis_id.clone()));
            }
        }
    }
    out
}

fn conflict_oracle() -> Outcome {
    let start = Instant::now();
    let (mut checks, mut mismatches) = (0usize, 0usize);
    let mut first = None;
    for run in sessions(ORACLE_SESSIONS) {
        for (seq, state) in &run.snapshots {
            let Some(round) = state.rounds.last() else { continue };
            let active: Vec<(HypothesisId, HypothesisId)> = state
                .conflicts
                .iter()
                .filter(|c| c.is_active())
                .map(|c| (c.hypothesis_pair[0].clone(), c.hypothesis_pair[1].clone()))
                .collect();
            let active_set: BTreeSet<_> = active.iter().cloned().collect();
            checks += 1;
            if active_set != pairwise_oracle(round) || active_set.len() != active.len() {
                mismatches += 1;
                first.get_or_insert((run.seed, *seq));
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(mismatches == 0, || {
        format!("{mismatches} mismatches, first at seed/seq {first:?}")
    })?;
    ensure(elapsed < ORACLE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{ORACLE_SESSIONS} sessions, {checks} snapshots, 0 mismatches in {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn lifecycle_golden() -> Outcome {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let outcome = run_lifecycle(out.path()).map_err(|e| e.to_string())?;
    let md = export(&outcome.log_path, ExportFormat::Markdown).map_err(|e| e.to_string())?;
    check_golden(&fixtures().join("lifecycle/report.golden.md"), &md)?;

    let log = load_session(&outcome.log_path).map_err(|e| e.to_string())?;
    let state = log.fold_state(FoldTarget::Latest).map_err(|e| e.to_string())?;
    let kinds: Vec<(LifecycleKind, u32)> = state
        .conflicts
        .iter()
        .flat_map(|c| c.lifecycle.iter().map(|e| (e.kind, e.round_index)))
        .collect();
    ensure(
        kinds
            == [
                (LifecycleKind::Opened, 1),
                (LifecycleKind::StanceChanged, 3),
                (LifecycleKind::Resolved, 3),
            ],
        || format!("lifecycle {kinds:?}"),
    )?;
    let lab: ItemId = "i3".into();
    let flags: Vec<String> = (0..state.rounds.len() as u32)
        .map(|r| {
            log.fold_state(FoldTarget::RoundBoundary(r))
                .map(|s| format!("{:?}", item_flag(&s, &lab)))
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let flags = flags.join("->");
    ensure(flags == "None->Conflict->Conflict->Resolved", || format!("flags {flags}"))?;
    Ok(format!("Opened(1), StanceChanged(3), Resolved(3); i3 {flags}; golden matches"))
}

fn carry_forward() -> Outcome {
    let (mut rounds, mut checked, mut violations) = (0usize, 0usize, 0usize);
    for run in sessions(PROPERTY_SESSIONS) {
        let state = run.session.state();
        for (r, round) in state.rounds.iter().enumerate() {
            if !round.kind.is_targeted() {
                continue;
            }
            rounds += 1;
            for op in &round.opinions {
                if round.spoke.contains(&op.agent_id) {
                    continue;
                }
                checked += 1;
                // latest earlier opinion; an agent muted last round has none there
                let expected: Option<Opinion> = state.rounds[..r]
                    .iter()
                    .rev()
                    .find_map(|p| p.opinion(&op.agent_id))
                    .map(|p| p.carried_to(round.round_index));
                if expected.as_ref() != Some(op) {
                    violations += 1;
                }
            }
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    ensure(rounds > 0, || "no targeted rounds generated".into())?;
    Ok(format!("{rounds} targeted rounds, {checked} carried opinions, 0 violations"))
}

fn flow_conservation() -> Outcome {
    let (mut nodes, mut violations) = (0usize, 0usize);
    for run in sessions(PROPERTY_SESSIONS) {
        let state = run.session.state();
        let Ok(edges) = compute_hypothesis_flow(state) else {
            ensure(state.rounds.len() < 2, || format!("seed {}: flow failed", run.seed))?;
            continue;
        };
        let mut outgoing: BTreeMap<(u32, HypothesisId), u32> = BTreeMap::new();
        for e in &edges {
            *outgoing
                .entry((e.from.round_index, e.from.hypothesis_id.clone()))
                .or_default() += e.weight;
        }
        let mut restricted: BTreeMap<(u32, HypothesisId), u32> = BTreeMap::new();
        for pair in state.rounds.windows(2) {
            for o in &pair[0].opinions {
                if pair[1].opinion(&o.agent_id).is_some() {
                    *restricted
                        .entry((pair[0].round_index, o.hypothesis_id.clone()))
                        .or_default() += 1;
                }
            }
        }
        let keys: BTreeSet<_> = outgoing.keys().chain(restricted.keys()).collect();
        for k in keys {
            nodes += 1;
            if outgoing.get(k) != restricted.get(k) {
                violations += 1;
            }
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok(format!("{nodes} (round, hypothesis) nodes, 0 violations"))
}

fn time_travel() -> Outcome {
    let (mut boundaries, mut mismatches) = (0usize, 0usize);
    for run in sessions(PROPERTY_SESSIONS) {
        let log = run.session.log();
        for r in 0..run.session.state().rounds.len() as u32 {
            boundaries += 1;
            let boundary = log.round_boundary(r);
            let live = run
                .snapshots
                .iter()
                .find(|(seq, _)| Some(*seq) == boundary)
                .map(|(_, s)| s);
            let folded = log.fold_state(FoldTarget::RoundBoundary(r)).ok();
            if live.is_none() || folded.as_ref() != live {
                mismatches += 1;
            }
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches"))?;
    Ok(format!("{boundaries} round boundaries, 0 mismatches"))
}

fn mutate_analytics(event: &mut Event) -> bool {
    match &mut event.body {
        EventBody::RoundCommitted { summary, .. } => {
            summary.resolved_conflicts += 1;
            true
        }
        EventBody::ConflictOpened { conflict }
        | EventBody::ConflictUpdated { conflict }
        | EventBody::ConflictResolved { conflict } => {
            conflict.contested_item_ids.insert("i404".into());
            true
        }
        EventBody::SessionTerminated { consensus: Some(c) } => {
            c.dissenting_agents.insert("a404".into());
            true
        }
        _ => false,
    }
}

fn replay_and_tamper() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("session.mdtlog");
    let (mut logs, mut tampered, mut clean_failures, mut missed) = (0usize, 0usize, 0usize, 0usize);
    for run in sessions(PROPERTY_SESSIONS) {
        let log = run.session.log();
        std::fs::write(&path, encode_log(log).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        logs += 1;
        if !replay(&path).map_err(|e| e.to_string())?.divergences.is_empty() {
            clean_failures += 1;
        }
        let candidates: Vec<usize> = (0..log.len())
            .filter(|&i| mutate_analytics(&mut log.events()[i].clone()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
        for &at in candidates.choose_multiple(&mut rng, MUTATIONS_PER_LOG) {
            let mut forged = log.clone();
            mutate_analytics(&mut forged.events_mut()[at]);
            tampered += 1;
            let seq = forged.events()[at].seq;
            std::fs::write(&path, encode_log(&forged).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let report = replay(&path).map_err(|e| e.to_string())?;
            if !report.divergences.iter().any(|d| d.seq == seq) {
                missed += 1;
            }
        }
    }
    ensure(clean_failures == 0, || format!("{clean_failures} clean logs diverged"))?;
    ensure(missed == 0, || format!("{missed} of {tampered} mutations undetected"))?;
    Ok(format!(
        "{logs} logs replay with 0 divergences; {tampered} single-payload mutations (sampled per log) all flagged at their seq"
    ))
}

fn crash_safety() -> Outcome {
    let run = simulate(7, &SimParams::default());
    let log: &EventLog = run.session.log();
    let bytes = encode_log(log).map_err(|e| e.to_string())?.into_bytes();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5afe);
    let (mut loaded, mut rejected) = (0usize, 0usize);
    for _ in 0..TRUNCATIONS {
        let cut = rng.random_range(0..=bytes.len());
        match decode_log(&bytes[..cut]) {
            Ok(prefix) => {
                let n = prefix.len();
                ensure(prefix.events() == &log.events()[..n], || {
                    format!("cut {cut}: loaded events are not a prefix")
                })?;
                prefix
                    .fold_state(FoldTarget::Latest)
                    .map_err(|e| format!("cut {cut}: prefix does not fold: {e}"))?;
                loaded += 1;
            }
            Err(e) => {
                ensure(e.code() == "CorruptFile", || format!("cut {cut}: {e}"))?;
                rejected += 1;
            }
        }
    }
    Ok(format!(
        "{TRUNCATIONS} offsets over {} bytes: {loaded} clean prefixes, {rejected} CorruptFile",
        bytes.len()
    ))
}

fn malformed_agent() -> Outcome {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let outcome = run(&malformed_spec(out.path())).map_err(|e| e.to_string())?;
    let log = load_session(&outcome.log_path).map_err(|e| e.to_string())?;
    let state = log.fold_state(FoldTarget::Latest).map_err(|e| e.to_string())?;
    let agent: AgentId = "a2".into();
    let round = state.rounds.get(1).ok_or("round 1 did not commit")?;
    let op = round.opinion(&agent).ok_or("a2 has no opinion in round 1")?;
    let attempts = state.config.max_repairs + 1;
    let rejected = log
        .events()
        .iter()
        .filter(|e| matches!(&e.body, EventBody::StatementRejected { agent_id, .. } if *agent_id == agent))
        .count();
    ensure(round.abstained.contains(&agent), || "a2 not abstained".into())?;
    ensure(op.invalid_output && op.carried_forward, || format!("{op:?}"))?;
    ensure(rejected as u32 == attempts, || format!("{rejected} rejections, expected {attempts}"))?;
    Ok(format!(
        "{attempts} invalid replies, a2 abstained with carried opinion flagged invalid_output, round 1 committed"
    ))
}

fn round_of(hypotheses: &[&str]) -> Round {
    let opinions = hypotheses
        .iter()
        .enumerate()
        .map(|(i, h)| Opinion {
            agent_id: format!("a{}", i + 1).into(),
            round_index: 0,
            hypothesis_id: (*h).into(),
            hypothesis_label_raw: (*h).into(),
            reasoning_steps: Vec::new(),
            summary: String::new(),
            evidence: Vec::new(),
            changed_from: None,
            carried_forward: false,
            invalid_output: false,
        })
        .collect::<Vec<_>>();
    Round {
        round_index: 0,
        kind: RoundKind::Initial,
        spoke: opinions.iter().map(|o| o.agent_id.clone()).collect(),
        abstained: BTreeSet::new(),
        opinions,
        trigger: None,
    }
}

/// Largest share held by one hypothesis, counted by hand.
fn brute_share(hypotheses: &[&str]) -> f64 {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for h in hypotheses {
        *counts.entry(h).or_default() += 1;
    }
    *counts.values().max().unwrap_or(&0) as f64 / hypotheses.len() as f64
}

fn convergence_examples() -> Outcome {
    let cases: [(&[&str], f64, bool); 3] = [
        (&["h1", "h1", "h1", "h1"], 1.0, true),
        (&["h1", "h1", "h1", "h2"], 0.75, true),
        (&["h1", "h1", "h2", "h2"], 0.75, false),
    ];
    let mut lines = Vec::new();
    for (hs, threshold, expected) in cases {
        let status = convergence_of(&round_of(hs), &BTreeSet::new(), threshold);
        let brute = brute_share(hs);
        ensure((status.share - brute).abs() < 1e-12, || {
            format!("{hs:?}: share {} vs brute {brute}", status.share)
        })?;
        ensure(status.converged == (brute >= threshold) && status.converged == expected, || {
            format!("{hs:?} at {threshold}: converged={}", status.converged)
        })?;
        lines.push(format!("{}@{threshold}={}", hs.join("+"), status.converged));
    }
    Ok(lines.join(", "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("conflict oracle equivalence", conflict_oracle),
        ("lifecycle scenario golden", lifecycle_golden),
        ("carry-forward", carry_forward),
        ("flow conservation", flow_conservation),
        ("time-travel fidelity", time_travel),
        ("replay determinism and tamper detection", replay_and_tamper),
        ("crash safety", crash_safety),
        ("malformed-agent handling", malformed_agent),
        ("convergence threshold examples", convergence_examples),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let ms = start.elapsed().as_millis();
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{ms} ms]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{ms} ms]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
