//! Report document assembled from stage artifacts, written as JSON plus CSV tables.

use crate::config::{Format, RunConfig};
use crate::pipeline::{GateEntry, RunOutcome, Stage, StageRecord};
use crate::store::{content_key, write_atomic, CODE_VERSION};
use anyhow::Result;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub code_version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub provenance: Provenance,
    pub profile: Option<serde_json::Value>,
    pub verdict: Option<serde_json::Value>,
    pub spectrum: Option<serde_json::Value>,
    pub lowfreq: Option<serde_json::Value>,
    pub linear: Option<serde_json::Value>,
    pub nonlinear: Option<serde_json::Value>,
    pub gate_ledger: Vec<GateEntry>,
    /// Stage errors and ungated or gate-passing checks that failed.
    pub failures: Vec<String>,
    /// Gated checks skipped because their gate failed.
    pub caveats: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    OkWithCaveats,
    Failed,
}

impl ReportDocument {
    pub fn status(&self) -> RunStatus {
        if !self.failures.is_empty() {
            RunStatus::Failed
        } else if !self.caveats.is_empty() {
            RunStatus::OkWithCaveats
        } else {
            RunStatus::Ok
        }
    }
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn assemble(cfg: &RunConfig, outcome: &RunOutcome, started: f64) -> Result<ReportDocument> {
    let summary = |s: Stage| outcome.artifacts.get(&s).map(|a| a.summary.clone());
    let mut failures: Vec<String> = outcome
        .records
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.stage.name())))
        .collect();
    let mut caveats = vec![];
    for e in &outcome.ledger {
        match (e.status.as_str(), e.passed) {
            ("ran", Some(false)) => failures.push(format!("{} failed with its gate passing", e.check)),
            ("skipped", _) => caveats.push(format!(
                "{} skipped: {}; fallback: {}",
                e.check,
                e.reason.as_deref().unwrap_or("gate failed"),
                e.fallback.as_deref().unwrap_or("none")
            )),
            _ => {}
        }
    }
    if let Some(nl) = summary(Stage::Nonlinear) {
        if nl["growth_match"] == serde_json::Value::Bool(false) {
            failures.push(format!(
                "linear-regime growth match: relative mismatch {} exceeds 5%",
                nl["growth_relative_mismatch"]
            ));
        }
    }
    let spectrum = summary(Stage::Spectrum);
    Ok(ReportDocument {
        provenance: Provenance {
            config_hash: content_key("config", cfg)?,
            code_version: CODE_VERSION.into(),
            started_unix: started,
            finished_unix: unix_now(),
            stages: outcome.records.clone(),
        },
        profile: summary(Stage::Profile),
        verdict: spectrum.as_ref().map(|s| s["verdict"].clone()),
        spectrum,
        lowfreq: summary(Stage::Lowfreq),
        linear: summary(Stage::Linear),
        nonlinear: summary(Stage::Nonlinear),
        gate_ledger: outcome.ledger.clone(),
        failures,
        caveats,
    })
}

/// Writes report.json and one CSV per stage table; returns the paths written.
pub fn write(dir: &Path, formats: &[Format], doc: &ReportDocument, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
    let mut written = vec![];
    if formats.contains(&Format::Json) {
        let path = dir.join(REPORT_FILE);
        write_atomic(&path, &serde_json::to_vec_pretty(doc)?)?;
        written.push(path);
    }
    if formats.contains(&Format::Csv) {
        for a in outcome.artifacts.values() {
            for (name, table) in &a.tables {
                let path = dir.join(format!("{name}.csv"));
                write_atomic(&path, &table.to_csv()?)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

pub fn load(dir: &Path) -> Result<ReportDocument> {
    Ok(serde_json::from_slice(&std::fs::read(dir.join(REPORT_FILE))?)?)
}

/// Short plain-text view used by `inspect`.
pub fn render(doc: &ReportDocument) -> String {
    let mut out = String::new();
    let p = &doc.provenance;
    out += &format!("config {} (code {})\n", &p.config_hash[..12.min(p.config_hash.len())], p.code_version);
    for r in &p.stages {
        let state = match (&r.error, r.cache_hit) {
            (Some(e), _) => format!("error: {e}"),
            (None, true) => "cached".into(),
            (None, false) => "computed".into(),
        };
        out += &format!("  {:<10} {state}\n", r.stage.name());
    }
    if let Some(pr) = &doc.profile {
        out += &format!("profile: period {} speed {} residual {}\n", pr["period"], pr["speed"], pr["residual"]);
    }
    if let Some(v) = &doc.verdict {
        out += &format!(
            "verdict: overall {} (D1 {}, max Re {}; D2 {}; D3' {}; H3 {})\n",
            v["overall"], v["d1"], v["d1_max_re"], v["d2"], v["d3_prime"], v["h3"]
        );
    }
    for e in &doc.gate_ledger {
        out += &format!("ledger: {} {}", e.check, e.status);
        if let Some(r) = &e.reason {
            out += &format!(" ({r})");
        }
        if let Some(f) = &e.fallback {
            out += &format!("; fallback {f}");
        }
        out += "\n";
    }
    for f in &doc.failures {
        out += &format!("FAILED {f}\n");
    }
    out
}
