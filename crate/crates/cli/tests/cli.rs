//! End-to-end checks of the binary: generate, run with verification, bench.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dynkc"))
}

#[test]
fn gen_run_verify_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("s.txt");
    let report = dir.path().join("r.json");

    let out = bin()
        .args(["gen", "--kind", "uniform-churn", "--n", "10", "--m", "30", "--seed", "5"])
        .arg("--out")
        .arg(&stream)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin()
        .args(["run", "--engine", "lfmis", "--k", "2", "--eps", "0.5", "--verify"])
        .arg("--stream")
        .arg(&stream)
        .arg("--report")
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert!(json["steps"].as_array().unwrap().len() == 30);
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.cfg");
    let csv = dir.path().join("out.csv");
    std::fs::write(&cfg, "engines=lfmis\nn=12\nk=2\ngen=uniform-churn\nm=24\nseed=3\n").unwrap();

    let out = bin().arg("bench").arg("--config").arg(&cfg).arg("--out").arg(&csv).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().count() >= 2, "csv has header plus one row: {text}");
}

#[test]
fn malformed_stream_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("bad.txt");
    let report = dir.path().join("r.json");
    std::fs::write(&stream, "H nonsense\n+ 1 0.0\n").unwrap();

    let out = bin()
        .args(["run", "--engine", "lfmis", "--k", "1", "--eps", "0.5"])
        .arg("--stream")
        .arg(&stream)
        .arg("--report")
        .arg(&report)
        .output()
        .unwrap();
    assert!(!out.status.success());
}
