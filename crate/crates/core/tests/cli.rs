//! End-to-end run of the `kgqa` binary: ingest, stats, train, refine, ask,
//! and dataset evaluation, all inside a temp directory.

use std::path::{Path, PathBuf};
use std::process::Command;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn kgqa(args: &[&str]) -> serde_json::Value {
    let output = Command::new(env!("CARGO_BIN_EXE_kgqa"))
        .args(args)
        .output()
        .expect("failed to spawn kgqa");
    assert!(
        output.status.success(),
        "kgqa {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("kgqa output is not JSON")
}

#[test]
fn full_cli_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let vectors = dir.path().join("transe.vec");
    let gcn = dir.path().join("gcn.vec");

    let stats = kgqa(&[
        "kg",
        "ingest",
        "--triples",
        fixture("desk_kg.tsv").to_str().unwrap(),
        "--aliases",
        fixture("desk_aliases.tsv").to_str().unwrap(),
        "--out",
        store.to_str().unwrap(),
    ]);
    assert_eq!(stats["num_entities"], 24);
    assert_eq!(stats["num_relations"], 9);
    assert_eq!(stats["num_triples"], 20);

    let stats_again = kgqa(&["kg", "stats", "--store", store.to_str().unwrap()]);
    assert_eq!(stats, stats_again, "persisted store changed the statistics");

    let train = kgqa(&[
        "embed",
        "train",
        "--store",
        store.to_str().unwrap(),
        "--dim",
        "16",
        "--epochs",
        "20",
        "--seed",
        "7",
        "--out",
        vectors.to_str().unwrap(),
    ]);
    assert_eq!(train["epochs"], 20);

    let held_out = dir.path().join("test.tsv");
    std::fs::write(&held_out, "black shank\ttreated by\tmefenoxam\n").unwrap();
    let link_pred = kgqa(&[
        "embed",
        "eval",
        "--store",
        store.to_str().unwrap(),
        "--vectors",
        vectors.to_str().unwrap(),
        "--test",
        held_out.to_str().unwrap(),
    ]);
    let mrr = link_pred["mrr"].as_f64().unwrap();
    assert!(mrr > 0.0 && mrr <= 1.0, "mrr out of range: {mrr}");

    let refine = kgqa(&[
        "gcn",
        "refine",
        "--store",
        store.to_str().unwrap(),
        "--vectors",
        vectors.to_str().unwrap(),
        "--layers",
        "2",
        "--out",
        gcn.to_str().unwrap(),
    ]);
    assert_eq!(refine["nodes"], 24);
    assert_eq!(refine["layers"], 2);

    let asked = kgqa(&[
        "query",
        "ask",
        "--store",
        store.to_str().unwrap(),
        "--vectors",
        vectors.to_str().unwrap(),
        "--gcn",
        gcn.to_str().unwrap(),
        "--question",
        "How to treat black shank?",
        "--backend",
        "template",
    ]);
    assert_eq!(asked["abstained"], false);
    assert!(asked["answer"].as_str().unwrap().contains("mefenoxam"));
    assert!(asked["context"].as_str().unwrap().starts_with("EVIDENCE:"));

    let csv_path = dir.path().join("report.csv");
    let report = kgqa(&[
        "eval",
        "run",
        "--store",
        store.to_str().unwrap(),
        "--vectors",
        vectors.to_str().unwrap(),
        "--gcn",
        gcn.to_str().unwrap(),
        "--dataset",
        fixture("desk_qa.jsonl").to_str().unwrap(),
        "--report-csv",
        csv_path.to_str().unwrap(),
        "--backend",
        "template",
    ]);
    assert_eq!(report["counts"]["questions"], 5);
    assert_eq!(report["accuracy"].as_f64().unwrap(), 1.0);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("method,qtype,questions,accuracy,precision,recall,f1\n"));
    assert!(csv.contains("template,multihop,"));
}

#[test]
fn unknown_backend_fails() {
    let dir = tempfile::tempdir().unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_kgqa"))
        .args([
            "query",
            "ask",
            "--store",
            dir.path().join("missing").to_str().unwrap(),
            "--vectors",
            dir.path().join("missing.vec").to_str().unwrap(),
            "--gcn",
            dir.path().join("missing.vec").to_str().unwrap(),
            "--question",
            "q",
            "--backend",
            "carrier-pigeon",
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
}
