use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_foliab"))
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(sub: &str, scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(sub).arg("--scenario").arg(scenario).arg("--out").arg(out).args(extra).output().expect("binary runs")
}

fn write_scenario(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.json");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn malformed_scenario_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), r#"{"schema": 1, "fixture": "FIX-WARP", "seed": 1, "samples": "many"}"#);
    let out = run("identities", &sc, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("samples"));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), r#"{"schema": 1, "fixture": "FIX-WARP", "seed": 1, "sampels": 3}"#);
    let out = run("identities", &sc, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampels"));
}

#[test]
fn random_suites_require_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), r#"{"schema": 1, "fixture": "FIX-WARP", "samples": 2}"#);
    let out = run("identities", &sc, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    let out = run("identities", &sc, dir.path(), &["--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn unknown_fixture_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), r#"{"schema": 1, "fixture": "FIX-NOWHERE", "seed": 1}"#);
    let out = run("identities", &sc, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn list_fixtures_names_every_builtin() {
    let out = bin().arg("list-fixtures").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["FIX-PRODUCT", "FIX-SLOPE", "FIX-WARP", "FIX-WARP-SINGULAR", "FIX-HOPF"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
}

#[test]
fn reports_are_reproducible_and_anchored() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sc = scenario_dir().join("identities_warp.json");
    let ra = run("identities", &sc, a.path(), &["--seed", "99"]);
    let rb = run("identities", &sc, b.path(), &["--seed", "99"]);
    assert_eq!(ra.status.code(), Some(0), "{}", String::from_utf8_lossy(&ra.stdout));
    assert_eq!(ra.stdout, rb.stdout);
    let ja = fs::read(a.path().join("identities.json")).unwrap();
    let jb = fs::read(b.path().join("identities.json")).unwrap();
    assert_eq!(ja, jb);
    assert_eq!(
        fs::read(a.path().join("identities_checks.csv")).unwrap(),
        fs::read(b.path().join("identities_checks.csv")).unwrap()
    );

    let report: serde_json::Value = serde_json::from_slice(&ja).unwrap();
    assert_eq!(report["seed"], 99);
    let checks = report["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    for c in checks {
        assert!(!c["anchor"].as_str().unwrap().is_empty(), "{c}");
    }

    // A different seed is a different configuration.
    let c = tempfile::tempdir().unwrap();
    run("identities", &sc, c.path(), &["--seed", "100"]);
    let jc: serde_json::Value = serde_json::from_slice(&fs::read(c.path().join("identities.json")).unwrap()).unwrap();
    assert_ne!(jc["metadata"]["config_hash"], report["metadata"]["config_hash"]);
}

#[test]
fn failing_checks_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        r#"{"schema": 1, "fixture": "FIX-WARP", "seed": 1, "samples": 2, "jacobi": {"variation_samples": 1}, "tolerances": {"variation": 1e-12}}"#,
    );
    let out = run("jacobi", &sc, dir.path(), &[]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("FAIL variation_field_agreement"), "{text}");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mismatched_command_is_a_parse_error() {
    let out = run("jacobi", &scenario_dir().join("identities_warp.json"), tempfile::tempdir().unwrap().path(), &[]);
    assert_eq!(out.status.code(), Some(2));
}
