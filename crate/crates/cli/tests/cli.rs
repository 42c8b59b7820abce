use std::fs;
use std::path::Path;
use std::process::Command;

fn todalab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_todalab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = "plots = false\n[instances]\ncount = 3\nbattery_count = 2\nreflection_count = 1\n";

#[test]
fn empty_suite_list_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "suites = []\n");
    let out_dir = dir.path().join("out");
    let out = todalab(&["--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out_dir.join("report.json")).unwrap().trim(), "[]");
}

#[test]
fn passing_suites_exit_zero_and_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = todalab(&[
            "--config", &cfg, "--suite", "zero-curvature", "--suite", "canonical-roundtrip",
            "--seed", "11", "--out", out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        fs::read(out_dir.join("report.json")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let rows: serde_json::Value = serde_json::from_slice(&a).unwrap();
    let suites: Vec<&str> = rows.as_array().unwrap().iter().map(|r| r["suite"].as_str().unwrap()).collect();
    assert!(suites.contains(&"zero-curvature") && suites.contains(&"canonical-roundtrip"));
}

#[test]
fn tiny_tolerance_exits_one_with_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}[tolerances]\nroundtrip = 1e-300\n"));
    let out_dir = dir.path().join("out");
    let out = todalab(&["--config", &cfg, "--suite", "canonical-roundtrip", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let rows: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    let failing: Vec<&serde_json::Value> = rows.as_array().unwrap().iter().filter(|r| r["pass"] == false).collect();
    assert!(!failing.is_empty());
    assert!(failing.iter().all(|r| r["value"].as_f64().is_some()));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out_arg = out_dir.to_str().unwrap();
    assert_eq!(todalab(&["--suite", "no-such-suite", "--out", out_arg]).status.code(), Some(2));
    let bad = write_config(dir.path(), "[tolerances]\ncocycle = -1.0\n");
    assert_eq!(todalab(&["--config", &bad, "--out", out_arg]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_eq!(todalab(&["--config", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(todalab(&["--seed", "not-a-number"]).status.code(), Some(2));
    assert!(!out_dir.exists());
}
