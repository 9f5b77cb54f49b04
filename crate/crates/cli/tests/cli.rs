//! End-to-end runs of the `kinetic` binary.

use std::path::Path;
use std::process::{Command, Output};

const SMALL_STEADY: &str = r#"
threads = 1

[wall]
profile = "isothermal"
epsilon = 0.0

[grid]
shells = [0.5, 0.8, 0.93]
n_cos = 4
n_phi = 6
"#;

fn kinetic(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinetic")).args(args).env_remove("KINETIC_OUTPUT_DIR").current_dir(dir).output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn verify_on_defaults_reports_every_check_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = kinetic(dir.path(), &["verify", "--out", "run"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value = serde_json::from_str(&read(&dir.path().join("run/verify.json"))).unwrap();
    let records = report["records"].as_array().unwrap();
    assert!(records.len() >= 8);
    assert!(records.iter().all(|r| r["pass"] == true));

    let again = kinetic(dir.path(), &["report", "--out", "run"]);
    assert_eq!(again.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&again.stdout).contains("w1p_p3.5"));
}

#[test]
fn isothermal_steady_is_trivial_and_outputs_embed_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("iso.toml"), SMALL_STEADY).unwrap();
    let out = kinetic(dir.path(), &["steady", "--config", "iso.toml", "--out", "run", "--seed", "11"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read(&dir.path().join("run/summary.txt"));
    assert!(summary.contains("trivial_fixed_point") && summary.contains("trivial fixed point"));
    let hash = summary.lines().find_map(|l| l.split_whitespace().find_map(|w| w.strip_prefix("config_hash="))).unwrap().to_string();
    let csv = read(&dir.path().join("run/norms.csv"));
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("# schema="));
    assert!(header.contains(&format!("config_hash={hash}")) && header.contains("seed=11"));
}

#[test]
fn invalid_exponent_is_rejected_with_its_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[w1p]\np = -1.0\n").unwrap();
    let out = kinetic(dir.path(), &["steady", "--config", "bad.toml", "--out", "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("w1p.p"));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn output_directory_comes_from_the_environment_when_not_given() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_kinetic"))
        .args(["verify", "--lemma", "chi_cutoff"])
        .env("KINETIC_OUTPUT_DIR", "from_env")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("from_env/verify.json").exists());
}
