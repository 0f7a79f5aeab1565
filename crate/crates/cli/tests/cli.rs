use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn blq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blq")).current_dir(workspace()).args(args).output().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn runs_a_scenario_by_name() {
    let out = tempfile::tempdir().unwrap();
    let o = blq(&["run", "c01-young-constant", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS c01-young-constant"));
    let report: serde_json::Value = serde_json::from_str(&read(&out.path().join("report.json"))).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["task"], "gaussian-bl");
    assert!(out.path().join("timing.json").exists());
}

#[test]
fn malformed_json_fails_but_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"task\": \"gowers\", \"checks\": [").unwrap();
    let out = dir.path().join("out");
    let o = blq(&["run", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    let report = read(&out.join("report.json"));
    assert!(report.contains("\"error\": \"parse error"), "{report}");

    let o = blq(&["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failing_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("wrong.json");
    std::fs::write(&s, r#"{"task": "gaussian-bl", "cases": [{"label": "lw", "datum": {"family": "loomis-whitney", "d": 2}, "expected": 2.0}]}"#).unwrap();
    let o = blq(&["run", s.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("FAIL"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = blq(&["run", "c09-gowers", "--out", out.to_str().unwrap(), "--seed", "77"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names.iter().filter(|n| *n != "timing.json") {
        assert_eq!(std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap(), "{n:?} differs");
    }
    assert!(read(&a.join("report.json")).contains("\"seed\": 77"));
}

#[test]
fn suite_prints_a_table_and_threads_are_capped() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("s");
    std::fs::create_dir(&scen).unwrap();
    for n in ["c01-young-constant", "discrete-klein-four"] {
        std::fs::copy(workspace().join("scenarios").join(format!("{n}.json")), scen.join(format!("{n}.json"))).unwrap();
    }
    let o = Command::new(env!("CARGO_BIN_EXE_blq"))
        .env("BLQ_THREADS", "2")
        .args(["suite", scen.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.lines().next().unwrap().starts_with("scenario"));
    assert_eq!(table.lines().filter(|l| l.contains(" PASS ")).count(), 2, "{table}");

    let o = Command::new(env!("CARGO_BIN_EXE_blq")).env("BLQ_THREADS", "0").args(["run", "c01-young-constant"]).current_dir(workspace()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
