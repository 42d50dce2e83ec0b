use std::path::Path;
use std::process::Command;

use slitkit_cli::config::{ExperimentConfig, Kind};
use slitkit_cli::{run, OUTPUT_ENV};

const KINDS: [Kind; 8] =
    [Kind::Solve, Kind::Expand, Kind::Rates, Kind::Whitney, Kind::Neumann, Kind::Freeboundary, Kind::Barrier, Kind::Energy];

fn slitkit(args: &[&str], root: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_slitkit")).args(args).env(OUTPUT_ENV, root).output().expect("binary runs")
}

fn in_dir(kind: Kind, dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(kind);
    cfg.output_dir = dir.to_string_lossy().into_owned();
    cfg
}

#[test]
fn configs_round_trip() {
    for kind in KINDS {
        let cfg = ExperimentConfig::default_for(kind);
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg, "{}", kind.name());
    }
}

#[test]
fn invalid_fields_are_named() {
    let mut cfg = ExperimentConfig::default_for(Kind::Rates);
    cfg.alpha = 1.5;
    assert!(cfg.validate().unwrap_err().to_string().contains("alpha"));
    let mut cfg = ExperimentConfig::default_for(Kind::Whitney);
    cfg.data.q[0].mu = vec![1, 1];
    assert!(cfg.validate().unwrap_err().to_string().contains("data.q[0].mu"));
    let text = ExperimentConfig::default_for(Kind::Energy).to_toml().unwrap().replace("schema_version = 1", "schema_version = 7");
    assert!(ExperimentConfig::from_toml(&text).is_err());
}

#[test]
fn runs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in [Kind::Whitney, Kind::Freeboundary, Kind::Barrier] {
        let a = run(&in_dir(kind, &tmp.path().join("a"))).unwrap();
        let b = run(&in_dir(kind, &tmp.path().join("b"))).unwrap();
        assert!(a.pass() && b.pass());
        for (fa, fb) in a.files.iter().zip(&b.files) {
            if fa.extension().is_some_and(|e| e == "csv") {
                assert_eq!(std::fs::read(fa).unwrap(), std::fs::read(fb).unwrap(), "{}", fa.display());
            }
        }
    }
}

#[test]
fn freeboundary_unit_flux_centres_the_tip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = slitkit(&["freeboundary", "--phi", "cos_half", "--G", "1", "--bracket=-0.5,0.45", "--output", "fb"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("fb/free_boundary.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let gamma: f64 = row.split(',').next().unwrap().parse().unwrap();
    assert!(gamma.abs() <= 1e-6, "{gamma}");
    let manifest: toml::Value = toml::from_str(&std::fs::read_to_string(tmp.path().join("fb/manifest.toml")).unwrap()).unwrap();
    assert_eq!(manifest["pass"].as_bool(), Some(true));
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn whitney_run_writes_defects() {
    let tmp = tempfile::tempdir().unwrap();
    let out = slitkit(&["run", "whitney", "--k", "1", "--output", "w"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("w/defects.csv")).unwrap();
    assert!(csv.starts_with("order,defect,approach_rate"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn failing_check_sets_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default_for(Kind::Energy);
    cfg.data.expected_energy = Some(3.0);
    cfg.output_dir = "e".into();
    let path = tmp.path().join("energy.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let out = slitkit(&["run", "energy", "--config", path.to_str().unwrap()], tmp.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL energy"));
}

#[test]
fn bad_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    let text = ExperimentConfig::default_for(Kind::Rates).to_toml().unwrap().replace("count = 5", "count = 2");
    std::fs::write(&path, text).unwrap();
    let out = slitkit(&["run", "rates", "--config", path.to_str().unwrap()], tmp.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("scales.count"));
}
