use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hintrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hintrank")).args(args).env_remove("PGPASSWORD").output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr carries one JSON object")
}

fn synthetic_dataset(dir: &Path) -> PathBuf {
    let data = dir.join("d.jsonl");
    let out = hintrank(&[
        "collect",
        "--source",
        "synthetic",
        "--catalog",
        "synthetic",
        "--templates",
        "3",
        "--queries-per-template",
        "4",
        "--seed",
        "11",
        "--out",
        p(&data),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data
}

fn train_checkpoint(dir: &Path, data: &Path) -> PathBuf {
    let config = dir.join("c.json");
    std::fs::write(&config, r#"{"mode":"pairwise","max_epochs":2,"seed":5}"#).unwrap();
    let ckpt = dir.join("m.ckpt");
    let out = hintrank(&[
        "train",
        "--mode",
        "pairwise",
        "--config",
        p(&config),
        "--data",
        p(data),
        "--catalog",
        "synthetic",
        "--out",
        p(&ckpt),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    ckpt
}

#[test]
fn train_writes_checkpoint_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_dataset(dir.path());
    let ckpt = train_checkpoint(dir.path(), &data);
    assert!(ckpt.exists());
    let report = dir.path().join("m.ckpt.report.json");
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(parsed["mode"], "pairwise");
    assert_eq!(parsed["epochs_run"], 2);
}

#[test]
fn evaluate_refuses_a_foreign_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_dataset(dir.path());
    let ckpt = train_checkpoint(dir.path(), &data);
    let out = hintrank(&["evaluate", "--checkpoint", p(&ckpt), "--data", p(&data), "--catalog", "default"]);
    assert_eq!(out.status.code(), Some(6));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "CatalogMismatch");
    assert_eq!(err["exit_code"], 6);

    let ok = hintrank(&["evaluate", "--checkpoint", p(&ckpt), "--data", p(&data), "--catalog", "synthetic"]);
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("speedup"));
}

#[test]
fn rank_marks_exactly_one_winner_first() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_dataset(dir.path());
    let ckpt = train_checkpoint(dir.path(), &data);
    let out =
        hintrank(&["rank", "--checkpoint", p(&ckpt), "--data", p(&data), "--catalog", "synthetic", "--query-id", "0a"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert!(!rows.is_empty());
    assert!(rows[0].starts_with('*'));
    assert_eq!(rows.iter().filter(|r| r.starts_with('*')).count(), 1);
    let scores: Vec<f64> = rows.iter().map(|r| r[1..].split_whitespace().next().unwrap().parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn split_and_spectrum_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_dataset(dir.path());
    let ckpt = train_checkpoint(dir.path(), &data);
    let split_a = dir.path().join("a.json");
    let split_b = dir.path().join("b.json");
    for s in [&split_a, &split_b] {
        let out = hintrank(&[
            "split",
            "--data",
            p(&data),
            "--catalog",
            "synthetic",
            "--scenario",
            "repeat",
            "--selection",
            "rand",
            "--holdout",
            "1",
            "--seed",
            "4",
            "--out",
            p(s),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&split_a).unwrap(), std::fs::read(&split_b).unwrap());

    let csv = dir.path().join("s.csv");
    let out = hintrank(&[
        "spectrum",
        "--checkpoint",
        p(&ckpt),
        "--data",
        p(&data),
        "--catalog",
        "synthetic",
        "--split",
        p(&split_a),
        "--population",
        "train",
        "--out",
        p(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("k,sigma,log10_sigma"));
    assert_eq!(text.lines().count(), 65);
}

#[test]
fn collect_resumes_without_rewriting() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_dataset(dir.path());
    let before = std::fs::read(&data).unwrap();
    let out = hintrank(&[
        "collect",
        "--source",
        "synthetic",
        "--catalog",
        "synthetic",
        "--templates",
        "3",
        "--queries-per-template",
        "4",
        "--seed",
        "11",
        "--out",
        p(&data),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("written 0  skipped 96"));
    assert_eq!(std::fs::read(&data).unwrap(), before);
}

#[test]
fn inspect_reports_nodes_and_depth() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one.jsonl");
    let plan = r#"[{"Plan":{"Node Type":"Hash Join","Plans":[{"Node Type":"Seq Scan","Relation Name":"a","Plan Rows":10,"Total Cost":1.0},{"Node Type":"Seq Scan","Relation Name":"b","Plan Rows":20,"Total Cost":2.0}],"Plan Rows":5,"Total Cost":4.0}}]"#;
    let record = serde_json::json!({
        "query_id": "q1", "template_id": "t1", "sql": "select 1", "hint_set_id": 0,
        "plan_json": plan, "latency_ms": 3.5, "timed_out": false,
        "collected_at": "2024-01-01T00:00:00Z",
    });
    std::fs::write(&data, format!("{record}\n")).unwrap();
    let out = hintrank(&["inspect", "--data", p(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let field = |name: &str| text.lines().find(|l| l.starts_with(name)).unwrap()[name.len()..].trim().to_string();
    assert_eq!(field("Max Nodes"), "3");
    assert_eq!(field("Max Depth"), "2");
}

#[test]
fn bad_flags_are_usage_errors() {
    let out = hintrank(&["train", "--mode", "sideways", "--data", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "UsageError");
}

#[test]
fn missing_files_are_io_errors() {
    let out = hintrank(&["inspect", "--data", "/nonexistent/data.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "IoError");
}

#[test]
fn live_connection_failure_never_echoes_the_password() {
    let dir = tempfile::tempdir().unwrap();
    let queries = dir.path().join("q.jsonl");
    std::fs::write(&queries, "{\"query_id\":\"q\",\"template_id\":\"t\",\"sql\":\"select 1\"}\n").unwrap();
    let secret = "correct-horse-battery-staple";
    let out = Command::new(env!("CARGO_BIN_EXE_hintrank"))
        .args([
            "collect",
            "--source",
            "live",
            "--queries",
            p(&queries),
            "--db-host",
            "127.0.0.1",
            "--db-port",
            "1",
            "--out",
            p(&dir.path().join("o.jsonl")),
        ])
        .env("PGPASSWORD", secret)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(9));
    assert_eq!(stderr_json(&out)["error"], "GatewayError");
    assert!(!String::from_utf8_lossy(&out.stderr).contains(secret));
    assert!(!String::from_utf8_lossy(&out.stdout).contains(secret));
}
