//! End-to-end runs of the `pmac` binary.

use std::path::PathBuf;
use std::process::Command;

fn pmac() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pmac"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

#[test]
fn list_prints_the_six_experiments() {
    let out = pmac().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.lines().filter(|l| !l.starts_with(char::is_whitespace)).count(),
        6,
        "{text}"
    );
    assert!(text.contains("SreCdf [Fig. 2a]"));
}

#[test]
fn run_writes_csv_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = pmac()
        .args([
            "run",
            scenario("sre_cdf_2x2.json").to_str().unwrap(),
            "--realizations",
            "4",
            "--seed",
            "9",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("realizations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["n_realizations"], 4);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn malformed_scenario_reports_its_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"name\": \"x\",\n  \"colour\": 1\n}\n").unwrap();
    let out = pmac().arg("run").arg(&path).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bad.json:3:"), "{err}");
    assert!(err.contains("colour"), "{err}");
}
