use std::path::Path;
use std::process::{Command, Output};

fn ltss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ltss")).args(args).env("LTSS_SEED", "7").output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn create_query_info_and_recover() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("seismic.cfg");
    let csv = dir.path().join("data.csv");
    let db = dir.path().join("s.db");
    stdout(&ltss(&["generate", "--records", "0", "--schema-out", s(&cfg), "--out", s(&csv)]));
    stdout(&ltss(&["create", "--schema", s(&cfg), "--path", s(&db), "--capacity", "1000"]));
    assert_eq!(stdout(&ltss(&["query", "--path", s(&db), "-e", "SELECT count(*) FROM seismic;"])), "count\n0\n");

    let info = stdout(&ltss(&["info", "--path", s(&db)]));
    assert!(info.starts_with("schema seismic (28 bytes/record"), "{info}");
    assert!(info.lines().nth(2).unwrap().starts_with("0,1000,0,"), "{info}");
    let rc = stdout(&ltss(&["recover-check", "--path", s(&db)]));
    assert!(rc.lines().nth(1).unwrap().ends_with(",0"), "{rc}");

    let bad = ltss(&["query", "--path", s(&db), "-e", "SELECT nope FROM seismic;"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));
}

#[test]
fn usage_errors_fail() {
    assert!(!ltss(&["create"]).status.success());
    assert!(!ltss(&["replay", "--target", "127.0.0.1:9", "--ooo", "sideways"]).status.success());
}

#[test]
fn bench_query_emits_timing_csv() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("t.db");
    let out = stdout(&ltss(&["bench-query", "--suite", "taxi", "--path", s(&db), "--records", "2000", "--repeats", "1"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "suite,query,repeat,ms,rows,scanned,host,cpus");
    let ids: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(ids, ["Q1", "Q2", "Q3", "Q4", "Q5", "Q6", "Q7"]);
}
