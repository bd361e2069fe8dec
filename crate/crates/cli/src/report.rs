//! Human-readable and JSON reports over a session log.
//!
//! The JSON form embeds the analytics types unchanged, so it shares their
//! wire schema. The markdown form is a deterministic rendering of the same
//! document and is what golden files pin.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use mdtroom_core::analysis::{
    check_convergence, compute_hypothesis_flow, compute_round_summary, consensus_summary,
    item_flag, AnalysisError, Conflict, ConsensusSummary, ConvergenceStatus, FlowEdge, ItemFlag,
    RoundSummary,
};
use mdtroom_core::case::CaseRecord;
use mdtroom_core::debate::{AgentProfile, HypothesisEntry, Phase, Round};
use mdtroom_core::ids::{HypothesisId, ItemId};
use mdtroom_core::store::{load_session, EventLog, FoldTarget, SessionState};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Markdown,
    Json,
}

impl FromStr for ExportFormat {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(ExportFormat::Markdown),
            "json" => Ok(ExportFormat::Json),
            other => Err(CliError::Invalid(format!(
                "UnknownFormat: {other:?} (expected md or json)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundReport {
    pub round: Round,
    pub summary: RoundSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub session_id: String,
    pub phase: Phase,
    pub case: CaseRecord,
    pub agents: Vec<AgentProfile>,
    pub hypotheses: Vec<HypothesisEntry>,
    pub rounds: Vec<RoundReport>,
    /// Sorted by conflict id.
    pub conflicts: Vec<Conflict>,
    /// Flag of each item at the end of every round, index = round.
    pub item_flags: BTreeMap<ItemId, Vec<ItemFlag>>,
    pub flow: Vec<FlowEdge>,
    pub convergence: Option<ConvergenceStatus>,
    pub consensus: Option<ConsensusSummary>,
}

fn analysis(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::Store(s) => s.into(),
        other => CliError::Internal(other.to_string()),
    }
}

fn optional<T>(r: Result<T, AnalysisError>) -> Result<Option<T>, CliError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(AnalysisError::NoRounds | AnalysisError::TooFewRounds) => Ok(None),
        Err(e) => Err(analysis(e)),
    }
}

pub fn build_report(log: &EventLog) -> Result<Report, CliError> {
    let state = log.fold_state(FoldTarget::Latest)?;
    let mut rounds = Vec::with_capacity(state.rounds.len());
    for round in &state.rounds {
        rounds.push(RoundReport {
            round: round.clone(),
            summary: compute_round_summary(&state, round.round_index).map_err(analysis)?,
        });
    }
    let boundaries: Vec<SessionState> = (0..state.rounds.len() as u32)
        .map(|r| log.fold_state(FoldTarget::RoundBoundary(r)))
        .collect::<Result<_, _>>()?;
    let item_flags = state
        .case
        .item_ids()
        .map(|item| {
            let seq = boundaries.iter().map(|s| item_flag(s, item)).collect();
            (item.clone(), seq)
        })
        .collect();
    let mut conflicts = state.conflicts.clone();
    conflicts.sort_by(|a, b| a.conflict_id.cmp(&b.conflict_id));
    Ok(Report {
        session_id: state.session_id.clone(),
        phase: state.phase(),
        case: state.case.clone(),
        agents: state.agents.clone(),
        hypotheses: state.hypotheses.entries().to_vec(),
        rounds,
        conflicts,
        item_flags,
        flow: optional(compute_hypothesis_flow(&state))?.unwrap_or_default(),
        convergence: optional(check_convergence(&state))?,
        consensus: optional(consensus_summary(&state))?,
    })
}

pub fn render_json(report: &Report) -> String {
    let mut out = serde_json::to_string_pretty(report).expect("report serializes");
    out.push('\n');
    out
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

pub fn render_markdown(report: &Report) -> String {
    let labels: BTreeMap<&HypothesisId, &str> = report
        .hypotheses
        .iter()
        .map(|h| (&h.hypothesis_id, h.display_label.as_str()))
        .collect();
    let label = |h: &HypothesisId| format!("{h} {}", labels.get(h).copied().unwrap_or("?"));

    let mut md = String::new();
    let _ = writeln!(md, "# Session report: {}\n", report.session_id);
    let _ = writeln!(
        md,
        "Phase: {}. Committed rounds: {}.\n",
        report.phase,
        report.rounds.len()
    );

    md.push_str("## Case items\n\n| Item | Category | Label | Value |\n|---|---|---|---|\n");
    for item in &report.case.items {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} |",
            item.id,
            item.category.as_str(),
            cell(&item.label),
            cell(&item.value)
        );
    }

    md.push_str("\n## Agents\n\n| Agent | Specialty |\n|---|---|\n");
    for a in &report.agents {
        let _ = writeln!(md, "| {} | {} |", a.agent_id, cell(&a.specialty));
    }

    md.push_str("\n## Hypotheses\n\n| Id | Label |\n|---|---|\n");
    for h in &report.hypotheses {
        let _ = writeln!(md, "| {} | {} |", h.hypothesis_id, cell(&h.display_label));
    }

    md.push_str("\n## Rounds\n");
    for RoundReport { round, summary } in &report.rounds {
        let _ = writeln!(md, "\n### Round {} ({})\n", round.round_index, round.kind);
        if let Some(trigger) = &round.trigger {
            let _ = writeln!(md, "Trigger: {}\n", serde_json::to_string(trigger).unwrap_or_default());
        }
        md.push_str("| Agent | Hypothesis | Status |\n|---|---|---|\n");
        for op in &round.opinions {
            let mut status = Vec::new();
            if round.abstained.contains(&op.agent_id) {
                status.push("abstained".to_owned());
            }
            if op.carried_forward {
                status.push("carried forward".to_owned());
            }
            if op.invalid_output {
                status.push("invalid output".to_owned());
            }
            if let Some(from) = &op.changed_from {
                status.push(format!("changed from {from}"));
            }
            let _ = writeln!(
                md,
                "| {} | {} | {} |",
                op.agent_id,
                cell(&label(&op.hypothesis_id)),
                status.join("; ")
            );
        }
        let support: Vec<String> = summary
            .support
            .iter()
            .map(|(h, n)| format!("{h}={n}"))
            .collect();
        let _ = writeln!(
            md,
            "\nSupport: {}. New conflicts: {}. Resolved conflicts: {}.",
            support.join(", "),
            summary.new_conflicts,
            summary.resolved_conflicts
        );
    }

    md.push_str("\n## Opinion changes\n\n");
    let changes: Vec<_> = report
        .rounds
        .iter()
        .flat_map(|r| r.summary.opinion_changes.iter().map(move |c| (r.summary.round_index, c)))
        .collect();
    if changes.is_empty() {
        md.push_str("No agent changed hypothesis.\n");
    } else {
        md.push_str("| Rounds | Agent | From | To |\n|---|---|---|---|\n");
        for (r, c) in changes {
            let _ = writeln!(
                md,
                "| {} -> {} | {} | {} | {} |",
                r.saturating_sub(1),
                r,
                c.agent_id,
                c.from_hypothesis,
                c.to_hypothesis
            );
        }
    }

    md.push_str("\n## Conflicts\n");
    if report.conflicts.is_empty() {
        md.push_str("\nNo conflicts.\n");
    }
    for c in &report.conflicts {
        let _ = writeln!(
            md,
            "\n### {}: {} vs {}\n",
            c.conflict_id, c.hypothesis_pair[0], c.hypothesis_pair[1]
        );
        let join = |it: &mut dyn Iterator<Item = &str>| it.collect::<Vec<_>>().join(", ");
        let _ = writeln!(md, "Status: {:?}", c.status);
        let _ = writeln!(md, "Agents: {}", join(&mut c.involved_agents.iter().map(|a| a.as_str())));
        let _ = writeln!(
            md,
            "Contested items: {}",
            join(&mut c.contested_item_ids.iter().map(|i| i.as_str()))
        );
        if let Some(prev) = &c.supersedes {
            let _ = writeln!(md, "Supersedes: {prev}");
        }
        md.push_str("Lifecycle:\n");
        for e in &c.lifecycle {
            if e.detail.is_empty() {
                let _ = writeln!(md, "- {:?}({})", e.kind, e.round_index);
            } else {
                let _ = writeln!(md, "- {:?}({}): {}", e.kind, e.round_index, e.detail);
            }
        }
    }

    md.push_str("\n## Item flags\n\n");
    let n = report.rounds.len();
    md.push_str("| Item |");
    for r in 0..n {
        let _ = write!(md, " R{r} |");
    }
    md.push_str("\n|---|");
    md.push_str(&"---|".repeat(n));
    md.push('\n');
    for (item, flags) in &report.item_flags {
        let seq: Vec<String> = flags.iter().map(|f| format!("{f:?}")).collect();
        let _ = writeln!(md, "| {item} | {} |", seq.join(" | "));
    }

    md.push_str("\n## Hypothesis flow\n\n");
    if report.flow.is_empty() {
        md.push_str("Needs at least two rounds.\n");
    } else {
        md.push_str("| From | To | Agents |\n|---|---|---|\n");
        for e in &report.flow {
            let _ = writeln!(
                md,
                "| R{} {} | R{} {} | {} |",
                e.from.round_index, e.from.hypothesis_id, e.to.round_index, e.to.hypothesis_id, e.weight
            );
        }
    }

    md.push_str("\n## Consensus\n\n");
    match &report.consensus {
        None => md.push_str("No committed rounds.\n"),
        Some(c) => {
            let leading = c.hypothesis_id.as_ref().map_or("none".to_owned(), &label);
            let dissent: Vec<&str> = c.dissenting_agents.iter().map(|a| a.as_str()).collect();
            let _ = writeln!(md, "Converged: {}", if c.converged { "yes" } else { "no" });
            let _ = writeln!(md, "Leading hypothesis: {leading}");
            let _ = writeln!(md, "Support share: {:.2}", c.support_share);
            let _ = writeln!(
                md,
                "Dissenting agents: {}",
                if dissent.is_empty() { "none".to_owned() } else { dissent.join(", ") }
            );
            let _ = writeln!(md, "As of round: {}", c.as_of_round);
        }
    }
    md
}

pub fn render(report: &Report, format: ExportFormat) -> String {
    match format {
        ExportFormat::Markdown => render_markdown(report),
        ExportFormat::Json => render_json(report),
    }
}

/// Loads `log_path` and renders its report.
pub fn export(log_path: &Path, format: ExportFormat) -> Result<String, CliError> {
    let log = load_session(log_path)?;
    Ok(render(&build_report(&log)?, format))
}
