use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mdtroom_cli::{export, format_replay, replay, run, CliError, ExportFormat, RunSpec};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "mdtroom", version, about = "Run, audit and export multi-agent diagnostic debates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a complete session and write its log and report.
    Run {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        agents: PathBuf,
        /// Scripted replies, `<dir>/<agent_id>/<round>.json`.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long)]
        directives: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-fold a log and report recorded analytics that do not recompute.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Render a log as a markdown or JSON report on stdout.
    Export {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "md")]
        format: String,
    },
}

fn execute(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Run {
            case,
            agents,
            fixtures,
            directives,
            config,
            out,
        } => {
            let outcome = run(&RunSpec {
                case,
                agents,
                fixtures,
                directives,
                config,
                out,
            })?;
            println!(
                "{}: {} rounds, phase {}",
                outcome.session_id, outcome.rounds, outcome.phase
            );
            println!("log: {}", outcome.log_path.display());
            println!("report: {}", outcome.report_path.display());
            Ok(0)
        }
        Command::Replay { log } => {
            let report = replay(&log)?;
            print!("{}", format_replay(&report));
            Ok(if report.divergences.is_empty() { 0 } else { 1 })
        }
        Command::Export { log, format } => {
            let format: ExportFormat = format.parse()?;
            print!("{}", export(&log, format)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
