use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const CLUSTER: &str = "generate: { count: 4, racks: 2, map_slots: 2, reduce_slots: 1 }\n";
const WORKLOAD: &str = "\
profiles: { wordcount: { map_mu_ms: 30000, sigma: 0.3 } }
arrival: { process: fixed, interval_ms: 20000 }
chains:
  - { repeat: 12, jobs: [ { type: wordcount, maps: 6, reduces: 2 } ] }
";
const FAILURES: &str = "attempt_fail_prob: 0.25\n";

fn mrsim(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mrsim"));
    cmd.args(args).env_remove("MRSIM_OUT_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// A temp dir holding a small scenario under `scenario/`.
fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    let s = dir.path().join("scenario");
    fs::create_dir(&s).unwrap();
    fs::write(s.join("cluster.yaml"), CLUSTER).unwrap();
    fs::write(s.join("workload.yaml"), WORKLOAD).unwrap();
    fs::write(s.join("failures.yaml"), FAILURES).unwrap();
    dir
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn run_into(dir: &Path, out: &Path, extra: &[&str]) -> String {
    let scenario = dir.join("scenario");
    let mut args = vec!["run", "--scenario", p(&scenario), "--seed", "7", "--out", p(out)];
    args.extend_from_slice(extra);
    ok(&mrsim(&args, &[]))
}

/// Runs with an attempt log and exports it; returns the dataset path.
fn dataset(dir: &Path) -> PathBuf {
    let out = dir.join("run");
    run_into(dir, &out, &["--attempt-log"]);
    let csv = dir.join("data.csv");
    ok(&mrsim(&["export-dataset", "--log", p(&out.join("attempts.jsonl")), "--out", p(&csv)], &[]));
    csv
}

#[test]
fn repeated_runs_write_identical_reports() {
    let dir = workspace();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_into(dir.path(), &a, &[]);
    run_into(dir.path(), &b, &[]);
    let ra = fs::read(a.join("report.json")).unwrap();
    assert!(!ra.is_empty());
    assert_eq!(ra, fs::read(b.join("report.json")).unwrap());
    assert!(!a.join("trace.jsonl").exists());
}

#[test]
fn missing_workload_is_a_config_error() {
    let dir = workspace();
    let missing = dir.path().join("nope.yaml");
    let cluster = dir.path().join("scenario/cluster.yaml");
    let out = mrsim(&["run", "--cluster", p(&cluster), "--workload", p(&missing), "--seed", "1"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.yaml"));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = workspace();
    let bad = dir.path().join("bad.yaml");
    fs::write(&bad, "chains: [ { jobs: [ { type: teragen, maps: 2, reduces: 3 } ] } ]").unwrap();
    let cluster = dir.path().join("scenario/cluster.yaml");
    let out = mrsim(&["run", "--cluster", p(&cluster), "--workload", p(&bad), "--seed", "1"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_is_required() {
    let dir = workspace();
    let scenario = dir.path().join("scenario");
    let out = mrsim(&["run", "--scenario", p(&scenario), "--out", p(dir.path())], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn optional_logs_are_written_on_request() {
    let dir = workspace();
    let out = dir.path().join("o");
    run_into(dir.path(), &out, &["--trace", "--attempt-log", "--scheduler", "fair"]);
    let trace = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert!(trace.lines().count() > 10);
    for line in trace.lines().take(50) {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    assert!(out.join("attempts.jsonl").exists());
    assert!(!out.join("decisions.jsonl").exists());
}

#[test]
fn out_dir_env_is_honoured() {
    let dir = workspace();
    let env_out = dir.path().join("from-env");
    let scenario = dir.path().join("scenario");
    ok(&mrsim(&["run", "--scenario", p(&scenario), "--seed", "1"], &[("MRSIM_OUT_DIR", &env_out)]));
    assert!(env_out.join("report.json").exists());
    // An explicit flag still wins.
    let flag_out = dir.path().join("from-flag");
    ok(&mrsim(
        &["run", "--scenario", p(&scenario), "--seed", "1", "--out", p(&flag_out)],
        &[("MRSIM_OUT_DIR", &env_out)],
    ));
    assert!(flag_out.join("report.json").exists());
}

#[test]
fn run_config_supplies_scenario_and_seed() {
    let dir = workspace();
    let cfg = dir.path().join("run.yaml");
    fs::write(
        &cfg,
        "cluster: scenario/cluster.yaml\nworkload: scenario/workload.yaml\nfailures: scenario/failures.yaml\n\
         scheduler: fair\nseed: 3\nout_dir: cfg-out\n",
    )
    .unwrap();
    let stdout = ok(&mrsim(&["run", "--config", p(&cfg)], &[]));
    assert!(stdout.starts_with("fair seed=3"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cfg-out/report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 3);
}

#[test]
fn export_counts_match_rows() {
    let dir = workspace();
    let out = dir.path().join("run");
    run_into(dir.path(), &out, &["--attempt-log"]);
    let csv = dir.path().join("maps.csv");
    let stdout = ok(&mrsim(
        &["export-dataset", "--log", p(&out.join("attempts.jsonl")), "--out", p(&csv), "--kind", "map"],
        &[],
    ));
    let rows = fs::read_to_string(&csv).unwrap().lines().count() - 1;
    assert!(rows > 0);
    assert!(stdout.starts_with(&format!("rows={rows} ")), "{stdout}");
    let nums: Vec<usize> = stdout.split_whitespace().map(|kv| kv.split('=').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(nums[1] + nums[2], nums[0]);
}

#[test]
fn empty_log_exports_header_only() {
    let dir = workspace();
    let log = dir.path().join("empty.jsonl");
    fs::write(&log, "").unwrap();
    let csv = dir.path().join("empty.csv");
    let stdout = ok(&mrsim(&["export-dataset", "--log", p(&log), "--out", p(&csv)], &[]));
    assert!(stdout.starts_with("rows=0 "));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("job_id,task_id,"), "{text}");
}

#[test]
fn train_records_selected_kind() {
    let dir = workspace();
    let csv = dataset(dir.path());
    let model = dir.path().join("m.json");
    let stdout = ok(&mrsim(
        &["train", "--data", p(&csv), "--task-type", "map", "--select-best", "tree,glm", "--out", p(&model)],
        &[],
    ));
    assert!(stdout.contains("selected"));
    let cv: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("m.cv.json")).unwrap()).unwrap();
    let map = &cv["MAP"];
    let selected = map["selected"].as_str().unwrap();
    assert!(selected == "tree" || selected == "glm", "{selected}");
    assert_eq!(map["candidates"].as_array().unwrap().len(), 2);
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(saved["kind"], selected);
}

#[test]
fn atlas_runs_with_trained_models() {
    let dir = workspace();
    let csv = dataset(dir.path());
    let model = dir.path().join("model.json");
    ok(&mrsim(&["train", "--data", p(&csv), "--kind", "tree", "--out", p(&model)], &[]));
    let (map, reduce) = (dir.path().join("model.map.json"), dir.path().join("model.reduce.json"));
    let out = dir.path().join("atlas");
    run_into(
        dir.path(),
        &out,
        &["--scheduler", "atlas", "--decision-log", "--map-model", p(&map), "--reduce-model", p(&reduce)],
    );
    let log = fs::read_to_string(out.join("decisions.jsonl")).unwrap();
    assert!(log.lines().count() > 0);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["at", "task", "branch", "nodes", "predicted_fail", "probability"] {
            assert!(v.get(key).is_some(), "{key} missing in {line}");
        }
    }
    let missing = mrsim(
        &["run", "--scenario", p(&dir.path().join("scenario")), "--seed", "1", "--scheduler", "atlas"],
        &[],
    );
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn train_rejects_tiny_dataset() {
    let dir = workspace();
    let csv = dataset(dir.path());
    let text = fs::read_to_string(&csv).unwrap();
    let tiny = dir.path().join("tiny.csv");
    fs::write(&tiny, text.lines().take(10).collect::<Vec<_>>().join("\n") + "\n").unwrap();
    let out = mrsim(&["train", "--data", p(&tiny), "--task-type", "map", "--out", p(&dir.path().join("t.json"))], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains('9'));
}

#[test]
fn single_scheduler_compare_has_zero_deltas() {
    let dir = workspace();
    let scenario = dir.path().join("scenario");
    let out = dir.path().join("cmp");
    ok(&mrsim(
        &["compare", "--scenario", p(&scenario), "--schedulers", "fifo", "--seeds", "1-2", "--out", p(&out)],
        &[],
    ));
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(row[0], "fifo");
    assert_eq!(row[1], "2");
    for (h, v) in header.iter().zip(&row) {
        if h.starts_with("delta_") {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{h}");
        }
    }
    assert!(out.join("comparison.json").exists());
}

#[test]
fn overlapping_training_seeds_are_rejected() {
    let dir = workspace();
    let scenario = dir.path().join("scenario");
    let out = mrsim(
        &["compare", "--scenario", p(&scenario), "--seeds", "1-3", "--train-seeds", "3-5", "--out", p(dir.path())],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
}
