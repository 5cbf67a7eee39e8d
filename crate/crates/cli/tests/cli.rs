use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/paper_sec5.toml")
}

fn atmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atmpc"))
        .args(args)
        .env("ATMPC_LOG", "error")
        .output()
        .expect("binary runs")
}

fn path_arg(p: &std::path::Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn run_writes_trace_report_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("robust");
    let o = atmpc(&[
        "run",
        "--scenario",
        path_arg(&scenario()),
        "--mode",
        "robust",
        "--out",
        path_arg(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 22);
    assert!(trace.starts_with("k,x1,x2,u1,stage"));
    for k in [0, 3, 7, 20] {
        assert!(out.join(format!("sets_k{k}.json")).exists());
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "robust");
    assert_eq!(report["steps"], 20);
    assert!(String::from_utf8_lossy(&o.stdout).contains("J_p"));
}

#[test]
fn compare_writes_one_directory_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = atmpc(&[
        "compare",
        "--scenario",
        path_arg(&scenario()),
        "--out",
        path_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for mode in ["adaptive", "simplified", "robust"] {
        assert!(dir.path().join(mode).join("trace.csv").exists());
    }
    let cmp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("comparison.json")).unwrap())
            .unwrap();
    assert_eq!(cmp["ordering_holds"], true);
    assert_eq!(cmp["reports"].as_array().unwrap().len(), 3);
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert_eq!(String::from_utf8_lossy(&o.stdout), summary);
}

#[test]
fn verify_passes_on_the_bundled_scenario() {
    let o = atmpc(&["verify", "--scenario", path_arg(&scenario())]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert!(stdout.contains("ordering   holds"));
    assert_eq!(stdout.matches("monitors true").count(), 3);
}

#[test]
fn sets_prints_requested_snapshots() {
    let o = atmpc(&[
        "sets",
        "--scenario",
        path_arg(&scenario()),
        "--mode",
        "robust",
        "--at",
        "0,5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("\"k\": 0"));
    assert!(text.contains("\"k\": 5"));

    let o = atmpc(&[
        "sets",
        "--scenario",
        path_arg(&scenario()),
        "--mode",
        "robust",
        "--at",
        "99",
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no snapshot at k = 99"));
}

#[test]
fn invalid_scenario_reports_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario())
        .unwrap()
        .replace("theta_true = [-0.2, 0.5]", "theta_true = [0.9, 0.9]");
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, text).unwrap();
    let o = atmpc(&[
        "run",
        "--scenario",
        path_arg(&bad),
        "--out",
        path_arg(&dir.path().join("o")),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("theta_true"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn missing_file_and_unknown_mode_fail() {
    let o = atmpc(&[
        "run",
        "--scenario",
        "/nonexistent.toml",
        "--out",
        "/tmp/never",
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent.toml"));

    let o = atmpc(&[
        "run",
        "--scenario",
        path_arg(&scenario()),
        "--mode",
        "greedy",
        "--out",
        "/tmp/never",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
