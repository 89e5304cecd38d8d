//! Subcommand bodies, shared by the binary and the tests.

use crate::checks::{self, CheckOutcome, Suite};
use crate::config::RunConfig;
use crate::pipeline::{execute, Stage};
use crate::report::{self, ReportDocument, RunStatus};
use crate::store::Cache;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Parses "all" or a comma-separated stage list.
pub fn parse_stages(list: &str) -> Result<Vec<Stage>, String> {
    if list.trim() == "all" {
        return Ok(Stage::ALL.to_vec());
    }
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| Stage::parse(s).ok_or_else(|| format!("unknown stage '{}'", s.trim())))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|v| if v.is_empty() { Err("empty stage list".into()) } else { Ok(v) })
}

pub struct RunResult {
    pub code: i32,
    pub report: Option<ReportDocument>,
    pub message: String,
}

/// Loads and validates the config before any compute, runs the stages and writes the report.
pub fn cmd_run(config: &Path, stages: &str, out: Option<PathBuf>) -> RunResult {
    let fail = |code, message: String| RunResult { code, report: None, message };
    let mut cfg = match RunConfig::load(config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e.to_string()),
    };
    let stages = match parse_stages(stages) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_CONFIG, format!("config error: {e}")),
    };
    if let Some(dir) = out {
        cfg.output.directory = dir;
    }
    let dir = cfg.output.directory.clone();
    let started = report::unix_now();
    let outcome = execute(&cfg, &stages, &Cache::new(&dir));
    let doc = match report::assemble(&cfg, &outcome, started) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_CHECK_FAILED, format!("report: {e}")),
    };
    if let Err(e) = report::write(&dir, &cfg.output.formats, &doc, &outcome) {
        return fail(EXIT_CHECK_FAILED, format!("writing report: {e}"));
    }
    let code = match doc.status() {
        RunStatus::Failed => EXIT_CHECK_FAILED,
        RunStatus::Ok | RunStatus::OkWithCaveats => EXIT_OK,
    };
    RunResult { code, message: report::render(&doc), report: Some(doc) }
}

pub fn cmd_verify(suite: &str) -> (i32, Vec<CheckOutcome>, Option<String>) {
    let suites: Vec<Suite> = if suite == "all" {
        vec![Suite::Identities, Suite::Structure, Suite::Rates]
    } else {
        match Suite::parse(suite) {
            Some(s) => vec![s],
            None => return (EXIT_CONFIG, vec![], Some(format!("unknown suite '{suite}'"))),
        }
    };
    let outcomes: Vec<CheckOutcome> = suites.into_iter().flat_map(checks::run_suite).collect();
    let note = checks::ledger_note(&outcomes);
    (checks::exit_code(&outcomes), outcomes, note)
}

/// Directory named by --out, else the config's output directory.
pub fn cmd_inspect(config: Option<&Path>, out: Option<PathBuf>) -> Result<String, (i32, String)> {
    let dir = match (out, config) {
        (Some(d), _) => d,
        (None, Some(c)) => RunConfig::load(c).map_err(|e| (EXIT_CONFIG, e.to_string()))?.output.directory,
        (None, None) => return Err((EXIT_CONFIG, "inspect needs --config or --out".into())),
    };
    let doc = report::load(&dir).map_err(|e| (EXIT_CHECK_FAILED, format!("{}: {e}", dir.display())))?;
    Ok(report::render(&doc))
}
