#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mdtroom_cli::{run, CliError, RunOutcome, RunSpec};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn lifecycle_spec(out: &Path) -> RunSpec {
    let dir = fixtures().join("lifecycle");
    RunSpec {
        case: dir.join("case.json"),
        agents: dir.join("agents.json"),
        fixtures: Some(dir.join("replies")),
        directives: Some(dir.join("directives.json")),
        config: Some(dir.join("config.toml")),
        out: out.to_owned(),
    }
}

pub fn malformed_spec(out: &Path) -> RunSpec {
    let dir = fixtures().join("malformed");
    RunSpec {
        case: fixtures().join("lifecycle/case.json"),
        agents: dir.join("agents.json"),
        fixtures: Some(dir.join("replies")),
        directives: None,
        config: Some(dir.join("config.toml")),
        out: out.to_owned(),
    }
}

pub fn run_lifecycle(out: &Path) -> Result<RunOutcome, CliError> {
    run(&lifecycle_spec(out))
}

/// Compares `actual` with the golden file, rewriting it when
/// `UPDATE_GOLDEN` is set.
pub fn check_golden(path: &Path, actual: &str) -> Result<(), String> {
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let line = expected
        .lines()
        .zip(actual.lines())
        .position(|(a, b)| a != b)
        .unwrap_or_else(|| expected.lines().count().min(actual.lines().count()));
    Err(format!(
        "{} differs from output at line {}; rerun with UPDATE_GOLDEN=1 after checking the change",
        path.display(),
        line + 1
    ))
}
