//! File-driven runner, auditor and report exporter for debate sessions.

mod error;
pub mod report;
pub mod run;

use std::path::Path;

use mdtroom_core::store::{load_session, ReplayReport};

pub use error::CliError;
pub use report::{build_report, export, render, render_json, render_markdown, ExportFormat, Report};
pub use run::{run, Directive, DirectiveAction, DirectiveOutcome, DirectiveResult, RunConfig, RunOutcome, RunSpec};

/// Folds the log at `log_path`, recomputing every derived analytic and
/// comparing it against what was recorded.
pub fn replay(log_path: &Path) -> Result<ReplayReport, CliError> {
    if !log_path.is_file() {
        return Err(CliError::Invalid(format!("no log at {}", log_path.display())));
    }
    Ok(load_session(log_path)?.audit()?)
}

/// One line per divergence after a `N divergences` header line.
pub fn format_replay(report: &ReplayReport) -> String {
    let mut out = format!(
        "{} events, {} rounds\n{} divergences\n",
        report.events,
        report.rounds,
        report.divergences.len()
    );
    for d in &report.divergences {
        out.push_str(&format!("seq {}: {} {}\n", d.seq, d.kind, d.detail));
    }
    out
}
