use std::fs;
use wavetrain_cli::commands::{cmd_inspect, cmd_run, cmd_verify, EXIT_CONFIG, EXIT_OK};
use wavetrain_cli::store::Cache;

const TILTED: &str = include_str!("../../../configs/tilted.toml");

#[test]
fn missing_system_name_is_a_config_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, TILTED.replacen("name = \"viscous_psystem\"", "", 1)).unwrap();
    let out = dir.path().join("out");
    let r = cmd_run(&cfg, "all", Some(out.clone()));
    assert_eq!(r.code, EXIT_CONFIG);
    assert!(r.report.is_none());
    assert!(!out.exists());
}

#[test]
fn profile_stage_alone_writes_cache_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tilted.toml");
    fs::write(&cfg, TILTED).unwrap();
    let out = dir.path().join("out");
    let r = cmd_run(&cfg, "profile", Some(out.clone()));
    assert_eq!(r.code, EXIT_OK, "{}", r.message);
    let doc = r.report.unwrap();
    assert_eq!(doc.provenance.stages.len(), 1);
    let rec = &doc.provenance.stages[0];
    assert!(!rec.cache_hit);
    assert!(Cache::new(&out).contains("profile", &rec.key));
    assert!(out.join("profile.csv").is_file());
    let first = fs::read(out.join("profile.csv")).unwrap();

    let again = cmd_run(&cfg, "profile", Some(out.clone()));
    assert!(again.report.unwrap().provenance.stages[0].cache_hit);
    assert_eq!(fs::read(out.join("profile.csv")).unwrap(), first);
    assert!(cmd_inspect(None, Some(out)).unwrap().contains("profile"));
}

#[test]
fn unknown_suite_is_rejected() {
    assert_eq!(cmd_verify("everything").0, EXIT_CONFIG);
}
