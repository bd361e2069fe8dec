mod common;

use std::path::Path;
use std::process::Command;

use common::{check_golden, fixtures, lifecycle_spec, malformed_spec, run_lifecycle};
use mdtroom_cli::{
    build_report, export, replay, run, DirectiveResult, ExportFormat, Report,
};
use mdtroom_core::analysis::{
    check_convergence, compute_hypothesis_flow, compute_round_summary, consensus_summary,
    Conflict, ConsensusSummary, FlowEdge, ItemFlag, LifecycleKind, RoundSummary,
};
use mdtroom_core::debate::Phase;
use mdtroom_core::store::{decode_log, encode_log, load_session, EventBody, FoldTarget};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mdtroom"))
}

#[test]
fn lifecycle_report_matches_golden() {
    let out = tempfile::tempdir().unwrap();
    let outcome = run_lifecycle(out.path()).unwrap();
    let md = export(&outcome.log_path, ExportFormat::Markdown).unwrap();
    check_golden(&fixtures().join("lifecycle/report.golden.md"), &md).unwrap();
}

#[test]
fn lifecycle_scenario_facts() {
    let out = tempfile::tempdir().unwrap();
    let outcome = run_lifecycle(out.path()).unwrap();
    assert_eq!(outcome.rounds, 4);
    assert_eq!(outcome.phase, Phase::Terminated);
    let report = build_report(&load_session(&outcome.log_path).unwrap()).unwrap();

    assert_eq!(report.conflicts.len(), 1);
    let c = &report.conflicts[0];
    let kinds: Vec<(LifecycleKind, u32)> = c.lifecycle.iter().map(|e| (e.kind, e.round_index)).collect();
    assert_eq!(
        kinds,
        [
            (LifecycleKind::Opened, 1),
            (LifecycleKind::StanceChanged, 3),
            (LifecycleKind::Resolved, 3)
        ]
    );
    assert_eq!(
        report.item_flags[&"i3".into()],
        [ItemFlag::None, ItemFlag::Conflict, ItemFlag::Conflict, ItemFlag::Resolved]
    );
    let consensus = report.consensus.as_ref().unwrap();
    assert!(consensus.converged);
    assert_eq!(consensus.as_of_round, 3);

    let md = std::fs::read_to_string(&outcome.report_path).unwrap();
    assert!(md.contains("- Opened(1)"));
    assert!(md.contains("- StanceChanged(3)"));
    assert!(md.contains("- Resolved(3)"));
    assert!(md.contains("| i3 | None | Conflict | Conflict | Resolved |"));
    assert!(md.contains("| 0 | 2 | intervention to a3 | applied, round 3 |"));
}

#[test]
fn scripted_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let la = run_lifecycle(a.path()).unwrap().log_path;
    let lb = run_lifecycle(b.path()).unwrap().log_path;
    assert_eq!(std::fs::read(&la).unwrap(), std::fs::read(&lb).unwrap());
    // a rerun into the same directory replaces the previous log
    let again = run_lifecycle(a.path()).unwrap().log_path;
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(&lb).unwrap());
}

#[test]
fn replay_of_a_run_is_clean_and_tampering_is_located() {
    let out = tempfile::tempdir().unwrap();
    let log_path = run_lifecycle(out.path()).unwrap().log_path;
    assert!(replay(&log_path).unwrap().divergences.is_empty());

    let mut log = load_session(&log_path).unwrap();
    let at = log
        .events()
        .iter()
        .position(|e| matches!(e.body, EventBody::ConflictOpened { .. }))
        .unwrap();
    let seq = log.events()[at].seq;
    if let EventBody::ConflictOpened { conflict } = &mut log.events_mut()[at].body {
        conflict.involved_agents.insert("a4".into());
    }
    let forged = out.path().join("forged.mdtlog");
    std::fs::write(&forged, encode_log(&log).unwrap()).unwrap();
    let report = replay(&forged).unwrap();
    assert!(!report.divergences.is_empty());
    assert_eq!(report.divergences[0].seq, seq);
}

#[test]
fn prefix_of_a_log_verifies() {
    let out = tempfile::tempdir().unwrap();
    let log_path = run_lifecycle(out.path()).unwrap().log_path;
    let bytes = std::fs::read(&log_path).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let prefix = out.path().join("prefix.mdtlog");
    std::fs::write(&prefix, lines[..lines.len() / 2].join("\n") + "\n").unwrap();
    let report = replay(&prefix).unwrap();
    assert!(report.divergences.is_empty());
    assert_eq!(report.events, lines.len() / 2 - 1);
}

#[test]
fn missing_fixture_is_a_transport_failure_with_no_partial_round() {
    let out = tempfile::tempdir().unwrap();
    let replies = out.path().join("replies");
    for agent in ["a1", "a2", "a3", "a4"] {
        std::fs::create_dir_all(replies.join(agent)).unwrap();
        for r in 0..4 {
            let src = fixtures().join(format!("lifecycle/replies/{agent}/{r}.json"));
            if src.exists() && !(agent == "a4" && r == 1) {
                std::fs::copy(src, replies.join(format!("{agent}/{r}.json"))).unwrap();
            }
        }
    }
    let mut spec = lifecycle_spec(&out.path().join("out"));
    spec.fixtures = Some(replies);
    let err = run(&spec).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");

    let log_path = out.path().join("out/run-whipple-lifecycle.mdtlog");
    let log = load_session(&log_path).unwrap();
    let state = log.fold_state(FoldTarget::Latest).unwrap();
    assert_eq!(state.rounds.len(), 1);
    assert!(state.pending.is_none());
    assert!(log.events().iter().all(|e| !matches!(
        e.body,
        EventBody::RoundStarted { round_index: 1, .. }
    )));
}

#[test]
fn reeval_of_resolved_conflict_is_recorded_as_rejected() {
    let out = tempfile::tempdir().unwrap();
    let directives = out.path().join("directives.json");
    std::fs::write(
        &directives,
        r#"[
  {"after_round": 2, "action": "intervention", "selected_item_ids": ["i3"],
   "instruction": "Acid-fast staining of the biopsy was negative.", "target_agent_ids": ["a3"]},
  {"after_round": 3, "action": "reeval", "conflict_id": "c1"},
  {"after_round": 9, "action": "control", "control": {"action": "mute", "agent_id": "a2"}}
]"#,
    )
    .unwrap();
    let mut spec = lifecycle_spec(&out.path().join("out"));
    spec.directives = Some(directives);
    let outcome = run(&spec).unwrap();
    let results: Vec<&DirectiveResult> = outcome.directives.iter().map(|d| &d.result).collect();
    assert_eq!(results[0], &DirectiveResult::Applied { round_index: Some(3) });
    assert!(matches!(results[1], DirectiveResult::Rejected { code, .. } if code == "ConflictAlreadyResolved"));
    assert_eq!(results[2], &DirectiveResult::Skipped);
    let md = std::fs::read_to_string(&outcome.report_path).unwrap();
    assert!(md.contains("| 1 | 3 | reeval c1 | rejected: ConflictAlreadyResolved"));
    assert!(replay(&outcome.log_path).unwrap().divergences.is_empty());
}

#[test]
fn mute_directive_is_applied_between_rounds() {
    let out = tempfile::tempdir().unwrap();
    let directives = out.path().join("directives.json");
    std::fs::write(
        &directives,
        r#"[{"after_round": 0, "action": "control", "control": {"action": "mute", "agent_id": "a3"}}]"#,
    )
    .unwrap();
    let mut spec = lifecycle_spec(&out.path().join("out"));
    spec.directives = Some(directives);
    let outcome = run(&spec).unwrap();
    // with the dissenter muted, round 1 is unanimous and debate stops
    assert_eq!(outcome.rounds, 2);
    let state = load_session(&outcome.log_path).unwrap().fold_state(FoldTarget::Latest).unwrap();
    assert!(state.rounds[1].opinion(&"a3".into()).is_none());
    assert!(state.conflicts.is_empty());
}

#[test]
fn malformed_agent_abstains_and_round_commits() {
    let out = tempfile::tempdir().unwrap();
    let outcome = run(&malformed_spec(out.path())).unwrap();
    let log = load_session(&outcome.log_path).unwrap();
    let state = log.fold_state(FoldTarget::Latest).unwrap();
    let round = &state.rounds[1];
    assert!(round.abstained.contains(&"a2".into()));
    let op = round.opinion(&"a2".into()).unwrap();
    assert!(op.invalid_output && op.carried_forward);
    assert_eq!(op.hypothesis_id, state.rounds[0].opinion(&"a2".into()).unwrap().hypothesis_id);
    let rejected = log
        .events()
        .iter()
        .filter(|e| matches!(&e.body, EventBody::StatementRejected { agent_id, .. } if agent_id.as_str() == "a2"))
        .count();
    assert_eq!(rejected, 3);
}

#[test]
fn json_export_reuses_analytics_schemas() {
    let out = tempfile::tempdir().unwrap();
    let log_path = run_lifecycle(out.path()).unwrap().log_path;
    let doc: serde_json::Value =
        serde_json::from_str(&export(&log_path, ExportFormat::Json).unwrap()).unwrap();
    let state = load_session(&log_path).unwrap().fold_state(FoldTarget::Latest).unwrap();

    let conflicts: Vec<Conflict> = serde_json::from_value(doc["conflicts"].clone()).unwrap();
    assert_eq!(conflicts, state.conflicts);
    let flow: Vec<FlowEdge> = serde_json::from_value(doc["flow"].clone()).unwrap();
    assert_eq!(flow, compute_hypothesis_flow(&state).unwrap());
    let consensus: ConsensusSummary = serde_json::from_value(doc["consensus"].clone()).unwrap();
    assert_eq!(consensus, consensus_summary(&state).unwrap());
    assert_eq!(
        doc["convergence"],
        serde_json::to_value(check_convergence(&state).unwrap()).unwrap()
    );
    for (r, entry) in doc["rounds"].as_array().unwrap().iter().enumerate() {
        let summary: RoundSummary = serde_json::from_value(entry["summary"].clone()).unwrap();
        assert_eq!(summary, compute_round_summary(&state, r as u32).unwrap());
    }
}

#[test]
fn empty_log_and_unknown_format_are_invalid() {
    let out = tempfile::tempdir().unwrap();
    let empty = out.path().join("empty.mdtlog");
    std::fs::write(&empty, "").unwrap();
    let err = export(&empty, ExportFormat::Markdown).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("CorruptFile"), "{err}");
    let err = "pdf".parse::<ExportFormat>().unwrap_err();
    assert!(err.to_string().contains("UnknownFormat"));
}

#[test]
fn invalid_spec_exits_2() {
    let out = tempfile::tempdir().unwrap();
    let mut spec = lifecycle_spec(out.path());
    spec.agents = out.path().join("missing.json");
    assert_eq!(run(&spec).unwrap_err().exit_code(), 2);

    let mut spec = lifecycle_spec(out.path());
    spec.fixtures = None;
    assert_eq!(run(&spec).unwrap_err().exit_code(), 2);
}

#[test]
fn narrative_case_files_are_extracted() {
    let out = tempfile::tempdir().unwrap();
    let case = out.path().join("whipple.txt");
    std::fs::write(&case, "62-year-old male with chronic diarrhea.").unwrap();
    let record = mdtroom_cli::run::load_case(&case).unwrap();
    assert_eq!(record.case_id, "whipple");
    assert!(record.items.len() >= 2);
}

fn run_args(spec: &mdtroom_cli::RunSpec) -> Vec<String> {
    let p = |p: &Path| p.display().to_string();
    let mut args = vec![
        "run".into(),
        "--case".into(),
        p(&spec.case),
        "--agents".into(),
        p(&spec.agents),
        "--out".into(),
        p(&spec.out),
    ];
    if let Some(f) = &spec.fixtures {
        args.extend(["--fixtures".into(), p(f)]);
    }
    if let Some(d) = &spec.directives {
        args.extend(["--directives".into(), p(d)]);
    }
    if let Some(c) = &spec.config {
        args.extend(["--config".into(), p(c)]);
    }
    args
}

#[test]
fn binary_exit_codes_and_output() {
    let out = tempfile::tempdir().unwrap();
    let spec = lifecycle_spec(out.path());
    let status = bin().args(run_args(&spec)).output().unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));

    let log = out.path().join("run-whipple-lifecycle.mdtlog");
    let replayed = bin().args(["replay", "--log"]).arg(&log).output().unwrap();
    assert_eq!(replayed.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&replayed.stdout).contains("\n0 divergences\n"));

    let exported = bin().args(["export", "--format", "md", "--log"]).arg(&log).output().unwrap();
    assert_eq!(exported.status.code(), Some(0));
    let golden = std::fs::read_to_string(fixtures().join("lifecycle/report.golden.md")).unwrap();
    assert_eq!(String::from_utf8(exported.stdout).unwrap(), golden);

    let bad = bin().args(["export", "--format", "pdf", "--log"]).arg(&log).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));

    let mut broken = lifecycle_spec(&out.path().join("o2"));
    broken.fixtures = Some(out.path().join("nowhere"));
    let status = bin().args(run_args(&broken)).output().unwrap();
    assert_eq!(status.status.code(), Some(2));

    // a fixture directory with no replies at all fails at the first round
    let empty = out.path().join("empty-replies");
    std::fs::create_dir_all(&empty).unwrap();
    let mut down = lifecycle_spec(&out.path().join("o3"));
    down.fixtures = Some(empty);
    let status = bin().args(run_args(&down)).output().unwrap();
    assert_eq!(status.status.code(), Some(3));
}

#[test]
fn report_round_trips_through_decode() {
    let out = tempfile::tempdir().unwrap();
    let log_path = run_lifecycle(out.path()).unwrap().log_path;
    let log = load_session(&log_path).unwrap();
    let again = decode_log(encode_log(&log).unwrap().as_bytes()).unwrap();
    let a: Report = build_report(&log).unwrap();
    let b: Report = build_report(&again).unwrap();
    assert_eq!(
        mdtroom_cli::render_markdown(&a),
        mdtroom_cli::render_markdown(&b)
    );
}
