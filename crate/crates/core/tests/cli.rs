use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn pcfdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcfdr"))
        .args(args)
        .env("PCFDR_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn reference() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/reference.json").to_string()
}

#[test]
fn replicate_single_feature() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "m.csv", "0.001\n");
    let out = pcfdr(&["replicate", "-i", input.to_str().unwrap(), "--q", "0.05"]);
    let v = json(&out);
    assert_eq!(v["selected"], serde_json::json!([1]));
    assert_eq!(v["features"][0]["row"], 1);
    assert_eq!(v["features"][0]["khat"], 1);
}

#[test]
fn replicate_reports_ids_and_column_rule() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "m.csv",
        "# gene,study1,study2\ng1,0.0001,0.001\ng2,0.8,0.0005\ng3,0.9,0.7\n",
    );
    let out = pcfdr(&[
        "replicate",
        "-i",
        input.to_str().unwrap(),
        "--rule",
        "column",
        "--column",
        "1",
        "--q",
        "0.1",
    ]);
    let v = json(&out);
    assert_eq!(v["selected"], serde_json::json!([1]));
    assert_eq!(v["features"][0]["id"], "g1");
    assert_eq!(v["features"][0]["khat"], 2);

    let out = pcfdr(&["replicate", "-i", input.to_str().unwrap(), "--rule", "column", "--column", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pc_test_all_ones_rejects_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.csv", "1,1,1\n1,1,1\n1,1,1\n");
    let v = json(&pcfdr(&["pc-test", "-i", input.to_str().unwrap(), "--u", "2"]));
    assert_eq!(v["rejected"], serde_json::json!([]));
    assert_eq!(v["rejected_volume"], 0.0);
}

#[test]
fn pc_test_with_group_labels() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.csv", "0.0001\n0.9\n0.0002\n0.0003\n0.6\n0.7\n");
    let groups = write(dir.path(), "g.txt", "a\nb\na\na\nb\nb\n");
    let v = json(&pcfdr(&[
        "pc-test",
        "-i",
        input.to_str().unwrap(),
        "--groups",
        groups.to_str().unwrap(),
        "--u",
        "3",
    ]));
    assert_eq!(v["rejected"], serde_json::json!(["a"]));
}

#[test]
fn verify_reference_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("report.json");
    let out = pcfdr(&["verify", "--scenario", &reference(), "--reps", "200", "-o", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["all_pass"], true);
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS"));
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_pcfdr"))
            .args(["simulate", "--scenario", &reference(), "--reps", "50", "--seed", "9"])
            .env("PCFDR_THREADS", threads)
            .output()
            .unwrap()
    };
    let a = run("1");
    let b = run("1");
    let c = run("4");
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn combine_round_trips_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let values = [0.1, 1.0 / 3.0, 2.0f64.sqrt() / 7.0, 1e-300, 0.12345678901234568];
    let body: String = values.iter().map(|x| format!("{x:?}\n")).collect();
    let input = write(dir.path(), "p.csv", &body);
    let out = pcfdr(&["combine", "-i", input.to_str().unwrap(), "--method", "bonferroni"]);
    assert!(out.status.success());
    let back: Vec<f64> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(back, values);
}

#[test]
fn bad_input_exits_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.csv", "0.1,0.2\n0.3,abc\n");
    let out = pcfdr(&["combine", "-i", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":2:"), "{err}");

    let out_of_range = write(dir.path(), "q.csv", "1.5\n");
    let out = pcfdr(&["combine", "-i", out_of_range.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let bad_json = write(dir.path(), "s.json", "{\"m\": 3,\n oops}");
    let out = pcfdr(&["verify", "--scenario", bad_json.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = pcfdr(&["combine"]);
    assert_eq!(out.status.code(), Some(2));
}
