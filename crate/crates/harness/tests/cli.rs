use std::process::Command;

fn qpush() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qpush"))
}

#[test]
fn corrupted_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"seed\": \"twelve\"").unwrap();
    let out = qpush()
        .args(["verify", "laplace", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
    assert!(!dir.path().join("out/report.json").exists());
}

#[test]
fn unknown_field_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.json");
    std::fs::write(&path, r#"{"laplace": {"k_gird": [10]}}"#).unwrap();
    let out = qpush().args(["verify", "laplace", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_precision_exits_two() {
    let out = qpush().args(["verify", "laplace", "--precision-bits", "8"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn laplace_run_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = qpush()
        .args(["verify", "laplace", "--seed", "7", "--threads", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["config"]["experiment"], "laplace");
    assert!(report["verdicts"].as_array().unwrap().iter().all(|v| v["status"] == "pass"));
    for f in ["laplace_s.csv", "laplace_theta.csv", "runtimes.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(dir.path().join("laplace_s.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn core_error_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"main_theorem": {"tail_q": [1.5], "tail_samples": 10, "decomposition_samples": 0, "lln_samples": 0, "lln_grid": []}}"#).unwrap();
    let out = qpush()
        .args(["verify", "main-theorem", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
