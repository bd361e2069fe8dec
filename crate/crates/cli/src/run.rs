//! Headless debate runs driven by files.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mdtroom_core::case::{extract_case_items, CaseRecord, RuleBasedExtractor};
use mdtroom_core::debate::{
    AgentProfile, AgentTransport, Clock, ControlAction, DebateConfig, EngineError, FixedClock,
    InterventionRequest, LiveTransport, Phase, RoundKind, ScriptedTransport, Session, SystemClock,
};
use mdtroom_core::ids::ConflictId;
use mdtroom_core::llm::{ChatClient, LiveEndpoint};
use mdtroom_core::store::{load_session, LogWriter};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::report::{build_report, render_markdown};
use crate::CliError;

/// Timestamp stamped on every event of a scripted run.
pub const SCRIPTED_EPOCH_MILLIS: i64 = 0;

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub case: PathBuf,
    pub agents: PathBuf,
    pub fixtures: Option<PathBuf>,
    pub directives: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
}

/// Optional run config. The live section names the environment variable
/// holding the API key; the key itself is never read from a file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub debate: DebateConfig,
    pub live: Option<LiveEndpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum DirectiveAction {
    Intervention(InterventionRequest),
    Reeval { conflict_id: ConflictId },
    Control { control: ControlAction },
}

/// A scripted clinician action, applied once round `after_round` has committed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directive {
    pub after_round: u32,
    #[serde(flatten)]
    pub action: DirectiveAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum DirectiveResult {
    Applied { round_index: Option<u32> },
    Rejected { code: String, message: String },
    /// The round it waits for was never committed.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirectiveOutcome {
    /// Position in the directives file.
    pub index: usize,
    pub after_round: u32,
    pub action: String,
    pub result: DirectiveResult,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub session_id: String,
    pub log_path: PathBuf,
    pub report_path: PathBuf,
    pub phase: Phase,
    pub rounds: usize,
    pub directives: Vec<DirectiveOutcome>,
}

fn invalid(what: &str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(format!("{what} {}: {e}", path.display()))
}

fn read(what: &str, path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| invalid(what, path, e))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

/// Reads a case record from JSON, or extracts one from a plain-text
/// narrative. Extracted cases take the file stem as case id.
pub fn load_case(path: &Path) -> Result<CaseRecord, CliError> {
    let text = read("case file", path)?;
    if is_json(path) {
        let record: CaseRecord = serde_json::from_str(&text).map_err(|e| invalid("case file", path, e))?;
        return Ok(record.normalized());
    }
    let extracted = extract_case_items(&text, &RuleBasedExtractor).map_err(|e| invalid("case file", path, e))?;
    for w in &extracted.warnings {
        warn!(case = %path.display(), "{w}");
    }
    let mut record = extracted.record;
    record.case_id = path
        .file_stem()
        .map_or_else(|| "case".to_owned(), |s| s.to_string_lossy().into_owned());
    Ok(record)
}

pub fn load_agents(path: &Path) -> Result<Vec<AgentProfile>, CliError> {
    serde_json::from_str(&read("agents file", path)?).map_err(|e| invalid("agents file", path, e))
}

/// TOML unless the extension is `.json`.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = read("config file", path)?;
    if is_json(path) {
        serde_json::from_str(&text).map_err(|e| invalid("config file", path, e))
    } else {
        toml::from_str(&text).map_err(|e| invalid("config file", path, e))
    }
}

pub fn load_directives(path: &Path) -> Result<Vec<Directive>, CliError> {
    serde_json::from_str(&read("directives file", path)?).map_err(|e| invalid("directives file", path, e))
}

/// Session id derived from the case so reruns produce identical logs.
pub fn session_id_for(case: &CaseRecord) -> String {
    format!("run-{}", case.case_id)
}

fn describe(action: &DirectiveAction) -> String {
    match action {
        DirectiveAction::Intervention(req) => {
            let targets: Vec<&str> = req.target_agent_ids.iter().map(|a| a.as_str()).collect();
            format!("intervention to {}", targets.join(", "))
        }
        DirectiveAction::Reeval { conflict_id } => format!("reeval {conflict_id}"),
        DirectiveAction::Control { control } => match control {
            ControlAction::Mute(a) => format!("mute {a}"),
            ControlAction::Unmute(a) => format!("unmute {a}"),
            other => format!("{other:?}").to_lowercase(),
        },
    }
}

fn apply_directive(
    session: &mut Session,
    transport: &dyn AgentTransport,
    action: &DirectiveAction,
) -> Result<DirectiveResult, CliError> {
    let result = match action {
        DirectiveAction::Intervention(req) => session
            .submit_intervention(req.clone(), transport)
            .map(|r| Some(r.round_index)),
        DirectiveAction::Reeval { conflict_id } => session
            .request_reeval(conflict_id, transport)
            .map(|r| Some(r.round_index)),
        DirectiveAction::Control { control } => session.control(control.clone()).map(|_| None),
    };
    match result {
        Ok(round_index) => Ok(DirectiveResult::Applied { round_index }),
        Err(e @ (EngineError::TransportDown(_) | EngineError::Store(_))) => Err(e.into()),
        Err(e) => Ok(DirectiveResult::Rejected {
            code: e.code().to_owned(),
            message: e.to_string(),
        }),
    }
}

fn should_debate(session: &Session) -> bool {
    let state = session.state();
    state.phase() == Phase::Running && state.debate_rounds_used() < state.config.max_debate_rounds
}

fn render_directives(outcomes: &[DirectiveOutcome]) -> String {
    let mut md = String::from("\n## Directives\n\n");
    if outcomes.is_empty() {
        md.push_str("None.\n");
        return md;
    }
    md.push_str("| # | After round | Action | Result |\n|---|---|---|---|\n");
    for o in outcomes {
        let result = match &o.result {
            DirectiveResult::Applied { round_index: Some(r) } => format!("applied, round {r}"),
            DirectiveResult::Applied { round_index: None } => "applied".to_owned(),
            DirectiveResult::Rejected { code, message } => format!("rejected: {code} ({message})"),
            DirectiveResult::Skipped => "skipped, round never committed".to_owned(),
        };
        let _ = writeln!(md, "| {} | {} | {} | {} |", o.index, o.after_round, o.action, result);
    }
    md
}

/// Runs a whole session from files: the initial round, debate rounds until
/// convergence or budget, directives as their rounds commit, then
/// termination. Writes `<out>/<session_id>.mdtlog` and `<out>/report.md`.
pub fn run(spec: &RunSpec) -> Result<RunOutcome, CliError> {
    let case = load_case(&spec.case)?;
    let agents = load_agents(&spec.agents)?;
    let config = match &spec.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let directives = match &spec.directives {
        Some(p) => load_directives(p)?,
        None => Vec::new(),
    };
    let (transport, clock): (Box<dyn AgentTransport>, Arc<dyn Clock>) = match (&spec.fixtures, &config.live) {
        (Some(dir), _) => {
            if !dir.is_dir() {
                return Err(invalid("fixtures dir", dir, "not a directory"));
            }
            (
                Box::new(ScriptedTransport::new(dir)),
                Arc::new(FixedClock(SCRIPTED_EPOCH_MILLIS)),
            )
        }
        (None, Some(endpoint)) => {
            let client = ChatClient::new(endpoint.clone()).map_err(|e| CliError::Invalid(e.to_string()))?;
            (Box::new(LiveTransport::new(client)), Arc::new(SystemClock))
        }
        (None, None) => {
            return Err(CliError::Invalid(
                "either --fixtures or a [live] config section is required".into(),
            ))
        }
    };

    let session_id = session_id_for(&case);
    let mut session = Session::create_with_id(&session_id, case, agents, config.debate, clock)?;

    std::fs::create_dir_all(&spec.out).map_err(|e| invalid("output dir", &spec.out, e))?;
    let log_path = spec.out.join(format!("{session_id}.mdtlog"));
    if log_path.exists() {
        std::fs::remove_file(&log_path).map_err(|e| invalid("stale log", &log_path, e))?;
    }
    session.attach_sink(Box::new(LogWriter::create(&log_path, &session_id)?))?;
    info!(session = %session_id, log = %log_path.display(), "run started");

    session.run_round(RoundKind::Initial, transport.as_ref())?;

    let mut pending: Vec<(usize, Directive)> = directives.into_iter().enumerate().collect();
    pending.sort_by_key(|(_, d)| d.after_round);
    let mut pending: VecDeque<_> = pending.into();
    let mut outcomes = Vec::new();
    loop {
        while let Some((_, d)) = pending.front() {
            let latest = session.state().rounds.len() as u32 - 1;
            if d.after_round > latest {
                break;
            }
            let (index, d) = pending.pop_front().expect("front exists");
            let result = apply_directive(&mut session, transport.as_ref(), &d.action)?;
            info!(index, ?result, "directive");
            outcomes.push(DirectiveOutcome {
                index,
                after_round: d.after_round,
                action: describe(&d.action),
                result,
            });
        }
        if !should_debate(&session) {
            break;
        }
        session.run_round(RoundKind::Debate, transport.as_ref())?;
    }
    for (index, d) in pending {
        outcomes.push(DirectiveOutcome {
            index,
            after_round: d.after_round,
            action: describe(&d.action),
            result: DirectiveResult::Skipped,
        });
    }
    if session.status().phase != Phase::Terminated {
        session.control(ControlAction::Terminate)?;
    }

    // The file on disk must be the engine's log, and must replay cleanly.
    let written = load_session(&log_path)?;
    if written.events() != session.log().events() {
        return Err(CliError::Internal(format!(
            "{} differs from the in-memory log",
            log_path.display()
        )));
    }
    let audit = written.audit()?;
    if let Some(d) = audit.divergences.first() {
        return Err(CliError::Internal(format!(
            "{} divergences on replay, first at seq {}: {} {}",
            audit.divergences.len(),
            d.seq,
            d.kind,
            d.detail
        )));
    }

    let report = build_report(&written)?;
    let mut md = render_markdown(&report);
    md.push_str(&render_directives(&outcomes));
    let report_path = spec.out.join("report.md");
    std::fs::write(&report_path, md).map_err(|e| CliError::Internal(format!("{}: {e}", report_path.display())))?;

    Ok(RunOutcome {
        session_id,
        log_path,
        report_path,
        phase: report.phase,
        rounds: report.rounds.len(),
        directives: outcomes,
    })
}
