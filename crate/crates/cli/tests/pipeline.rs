use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vlrb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlrb")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = vlrb(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// synth → ingest → split, returning the run directory.
fn prepared(root: &Path) -> String {
    let raw = root.join("raw");
    let run = root.join("run");
    let (raw, run) = (raw.to_str().unwrap(), run.to_str().unwrap());
    ok(&["synth", "--out", raw, "--samples", "400", "--seed", "3", "--dim-text", "8", "--dim-image", "8"]);
    ok(&[
        "ingest",
        "--logs",
        &format!("{raw}/logs.jsonl"),
        "--prices",
        &format!("{raw}/prices.csv"),
        "--embeddings",
        &format!("{raw}/embeddings.vlrb"),
        "--out",
        run,
    ]);
    ok(&["split", "--out", run, "--seed", "3"]);
    run.to_string()
}

#[test]
fn leaderboard_lists_router_and_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let run = prepared(dir.path());
    ok(&["train", "--out", &run, "--router", "mlp", "--lambda", "100", "--trials", "1", "--epochs", "3", "--lr", "1e-3"]);
    ok(&["evaluate", "--out", &run]);
    ok(&["leaderboard", "--out", &run]);

    let csv = fs::read_to_string(format!("{run}/leaderboard.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "router,lambda,avg_acc,avg_cost,rank_score,rank,throughput");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let mut routers: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    routers.sort();
    assert_eq!(routers, ["cheapest", "mlp", "oracle", "strongest"]);
    assert_eq!(rows[0][0], "oracle");
    assert_eq!(rows[0][5], "0");
    let mlp = rows.iter().find(|r| r[0] == "mlp").unwrap();
    assert_eq!(mlp[1], "100");

    // ranks follow Rank Score for everything but the oracle
    let scores: Vec<f64> = rows[1..].iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    let ranks: Vec<usize> = rows[1..].iter().map(|r| r[5].parse().unwrap()).collect();
    assert_eq!(ranks, (1..rows.len()).collect::<Vec<_>>());

    assert!(Path::new(&format!("{run}/groups/g0.csv")).exists());
    assert!(Path::new(&format!("{run}/reports/mlp.meta.json")).exists());
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = prepared(dir.path());
    let train = || {
        ok(&["train", "--out", &run, "--router", "linear", "--lambda", "10", "--trials", "1", "--epochs", "2"]);
        fs::read(format!("{run}/checkpoints/linear/trial0.vlrk")).unwrap()
    };
    let first = train();
    let second = train();
    assert_eq!(first, second);
}

#[test]
fn evaluate_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let run = prepared(dir.path());
    ok(&["train", "--out", &run, "--router", "knn", "--k", "10", "--lambda", "0", "--trials", "1"]);
    ok(&["evaluate", "--out", &run]);
    let first = fs::read(format!("{run}/reports/knn.json")).unwrap();
    let manifest = fs::read(format!("{run}/run.json")).unwrap();
    ok(&["evaluate", "--out", &run]);
    assert_eq!(first, fs::read(format!("{run}/reports/knn.json")).unwrap());
    assert_eq!(manifest, fs::read(format!("{run}/run.json")).unwrap());
}

#[test]
fn trials_report_mean_and_spread() {
    let dir = tempfile::tempdir().unwrap();
    let run = prepared(dir.path());
    ok(&["train", "--out", &run, "--router", "linear", "--lambda", "100", "--trials", "3", "--epochs", "2"]);
    ok(&["evaluate", "--out", &run]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(format!("{run}/reports/linear.json")).unwrap()).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 3);
    let accs: Vec<f64> = report["trials"].as_array().unwrap().iter().map(|t| t["avg_acc"].as_f64().unwrap()).collect();
    let mean = accs.iter().sum::<f64>() / 3.0;
    assert!((report["summary"]["avg_acc"][0].as_f64().unwrap() - mean).abs() < 1e-9);
    assert!((report["mean"]["avg_acc"].as_f64().unwrap() - mean).abs() < 1e-9);
    let table = ok(&["leaderboard", "--out", &run]);
    assert!(table.contains('±'));
}

#[test]
fn pareto_writes_frontier() {
    let dir = tempfile::tempdir().unwrap();
    let run = prepared(dir.path());
    for router in ["linear", "kmeans"] {
        ok(&["train", "--out", &run, "--router", router, "--trials", "1", "--epochs", "2"]);
    }
    ok(&["evaluate", "--out", &run]);
    ok(&["pareto", "--out", &run]);
    let frontier: serde_json::Value = serde_json::from_slice(&fs::read(format!("{run}/frontier.json")).unwrap()).unwrap();
    assert!(frontier["points"].get("oracle").is_none());
    assert!(!frontier["pareto"].as_array().unwrap().is_empty());
}

#[test]
fn verify_passes() {
    let out = ok(&["verify"]);
    assert!(out.contains("verify: 8/8 checks passed"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none");
    let out = vlrb(&["evaluate", "--out", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "missing_artifact");

    let out = vlrb(&["train", "--out", "x", "--router", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let out = vlrb(&["train", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));

    let run = prepared(dir.path());
    fs::write(format!("{run}/split.json"), "{}").unwrap();
    let out = vlrb(&["evaluate", "--out", &run]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "validation");

    let out = Command::new(env!("CARGO_BIN_EXE_vlrb")).arg("verify").env("VLRB_THREADS", "many").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
