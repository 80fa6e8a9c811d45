use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lexcluster(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lexcluster"))
        .args(args)
        .current_dir(dir)
        .env_remove("LEXCLUSTER_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = lexcluster(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1, "one summary line: {stdout}");
    serde_json::from_str(&stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn small_data(dir: &Path) {
    ok(
        dir,
        &[
            "gen-synthetic",
            "--out",
            "data",
            "--n-labeled",
            "300",
            "--n-unlabeled",
            "2000",
            "--seed",
            "1",
        ],
    );
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = lexcluster(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in [
        "preprocess",
        "stats",
        "split",
        "brown",
        "embed",
        "kmeans",
        "featurize",
        "train",
        "score",
        "experiment",
    ] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn missing_input_is_a_data_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = lexcluster(dir.path(), &["stats", "--input", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x.jsonl"));
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        lexcluster(dir.path(), &["stats", "--bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(lexcluster(dir.path(), &["nonsense"]).status.code(), Some(1));
    let bad = lexcluster(
        dir.path(),
        &["gen-synthetic", "--out", "d", "--n-clusters", "1"],
    );
    assert_eq!(bad.status.code(), Some(1));
    assert!(!dir.path().join("d").exists());
}

#[test]
fn malformed_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.jsonl"),
        "{\"id\": \"a\", \"text\": \"x\", \"label\": 1}\nnot json\n",
    )
    .unwrap();
    let out = lexcluster(dir.path(), &["stats", "--input", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:2"));
}

#[test]
fn synthetic_generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    small_data(dir.path());
    let first: Vec<String> = ["train.jsonl", "test.jsonl", "unlabeled.jsonl", "oracle.tsv"]
        .iter()
        .map(|f| read(dir.path(), &format!("data/{f}")))
        .collect();
    small_data(dir.path());
    let second: Vec<String> = ["train.jsonl", "test.jsonl", "unlabeled.jsonl", "oracle.tsv"]
        .iter()
        .map(|f| read(dir.path(), &format!("data/{f}")))
        .collect();
    assert_eq!(first, second);
}

#[test]
fn degenerate_prior_labels_everything_positive() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"generator": {"positive_prior": 1.0, "label_noise": 0.0, "n_labeled": 50, "n_unlabeled": 10}}"#,
    )
    .unwrap();
    ok(
        dir.path(),
        &["gen-synthetic", "--config", "run.json", "--out", "d"],
    );
    let summary = ok(dir.path(), &["stats", "--input", "d/train.jsonl"]);
    let stats = &summary["details"]["stats"];
    assert_eq!(stats["n_positive"], stats["n_total"]);
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    small_data(dir.path());
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"sgns": {"dim": 5, "epochs": 1}}"#,
    )
    .unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "embed",
            "--config",
            "run.json",
            "--input",
            "data/unlabeled.jsonl",
            "--out",
            "a.txt",
        ],
    );
    ok(
        p,
        &[
            "embed",
            "--config",
            "run.json",
            "--dim",
            "3",
            "--input",
            "data/unlabeled.jsonl",
            "--out",
            "b.txt",
        ],
    );
    assert!(read(p, "a.txt").lines().next().unwrap().ends_with(" 5"));
    assert!(read(p, "b.txt").lines().next().unwrap().ends_with(" 3"));
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    small_data(p);
    ok(
        p,
        &[
            "preprocess",
            "--input",
            "data/unlabeled.jsonl",
            "--kind",
            "unlabeled",
            "--out",
            "pre.jsonl",
        ],
    );
    let embed = ok(
        p,
        &[
            "embed",
            "--input",
            "pre.jsonl",
            "--seed",
            "7",
            "--out",
            "vectors.txt",
        ],
    );
    assert_eq!(embed["seed"], 7);
    assert!(embed["inputs"]["pre.jsonl"].as_str().unwrap().len() == 64);
    ok(
        p,
        &[
            "kmeans",
            "--vectors",
            "vectors.txt",
            "--k",
            "10",
            "--out",
            "km10.tsv",
        ],
    );
    ok(
        p,
        &[
            "brown",
            "--input",
            "pre.jsonl",
            "--k",
            "10",
            "--window",
            "40",
            "--out",
            "brown.tsv",
            "--dendrogram",
            "tree.json",
        ],
    );
    ok(
        p,
        &[
            "featurize",
            "--input",
            "data/train.jsonl",
            "--clusters",
            "km10.tsv",
            "--spec-out",
            "spec.json",
        ],
    );
    ok(
        p,
        &[
            "train",
            "--train",
            "data/train.jsonl",
            "--spec",
            "spec.json",
            "--out",
            "model.json",
        ],
    );
    let scored = ok(
        p,
        &[
            "score",
            "--model",
            "model.json",
            "--spec",
            "spec.json",
            "--input",
            "data/test.jsonl",
            "--out",
            "scores.csv",
        ],
    );
    let auc = scored["details"]["auc"].as_f64().unwrap();
    assert!(auc > 0.6, "auc {auc}");

    std::fs::write(
        p.join("grid.json"),
        r#"{
            "train_sizes": [20, 50],
            "k_values": [10, 20],
            "resamples": 2,
            "schemes": [
                {"name": "bow", "source": {"type": "bow"}},
                {"name": "brown", "source": {"type": "dendrogram", "path": "tree.json"}},
                {"name": "w2v", "source": {"type": "embeddings", "path": "vectors.txt"}}
            ]
        }"#,
    )
    .unwrap();
    let args = [
        "experiment",
        "--config",
        "grid.json",
        "--train",
        "data/train.jsonl",
        "--test",
        "data/test.jsonl",
    ];
    ok(p, &[&args[..], &["--out", "r1"]].concat());
    ok(p, &[&args[..], &["--out", "r2"]].concat());
    for f in [
        "cells.csv",
        "aggregated.csv",
        "best_auc.csv",
        "best_k.csv",
        "summary.txt",
    ] {
        assert_eq!(
            read(p, &format!("r1/{f}")),
            read(p, &format!("r2/{f}")),
            "{f}"
        );
    }
    let cells = read(p, "r1/cells.csv");
    assert!(cells.starts_with("scheme,train_size,k,seed,auc\n"));
    assert_eq!(cells.lines().count(), 1 + 3 * 2 * 2 * 2);
    assert_eq!(
        read(p, "r1/best_auc.csv").lines().next().unwrap(),
        "train_size,bow,brown,w2v"
    );
}

#[test]
fn score_rejects_a_mismatched_spec() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    small_data(p);
    ok(
        p,
        &[
            "featurize",
            "--input",
            "data/train.jsonl",
            "--bow-k",
            "20",
            "--spec-out",
            "a.json",
        ],
    );
    ok(
        p,
        &[
            "featurize",
            "--input",
            "data/train.jsonl",
            "--bow-k",
            "30",
            "--spec-out",
            "b.json",
        ],
    );
    ok(
        p,
        &[
            "train",
            "--train",
            "data/train.jsonl",
            "--spec",
            "a.json",
            "--lambda",
            "0.1",
            "--out",
            "m.json",
        ],
    );
    let out = lexcluster(
        p,
        &[
            "score",
            "--model",
            "m.json",
            "--spec",
            "b.json",
            "--input",
            "data/test.jsonl",
            "--out",
            "s.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!p.join("s.csv").exists());
}
