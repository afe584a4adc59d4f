use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hnswlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hnswlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn hnswlab")
}

fn json(dir: &Path, args: &[&str]) -> Value {
    let mut full = vec!["--json"];
    full.extend_from_slice(args);
    let out = hnswlab(dir, &full);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn synth(dir: &Path) {
    json(
        dir,
        &["synth-gen", "--d", "16", "--k", "4", "--n", "600", "--seed", "3", "--out", "x.fvecs", "--queries", "25", "--queries-out", "q.fvecs"],
    );
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);

    let id = json(dir, &["id-estimate", "x.fvecs"]);
    assert_eq!(id["pca"]["k_intrinsic"], 4);

    let lid = json(dir, &["lid-profile", "x.fvecs", "--neighbours", "20", "--out", "p.hlp"]);
    assert_eq!(lid["summary"]["count"], 600);
    assert!(dir.join("p.hlp.summary.json").exists());

    json(dir, &["exact-baseline", "--data", "x.fvecs", "--queries", "q.fvecs", "--out", "b.hlb"]);
    let built = json(
        dir,
        &["build", "--data", "x.fvecs", "--order", "lid-desc", "--lid-profile", "p.hlp", "--out", "i.hlx", "--order-out", "o.order"],
    );
    assert_eq!(built["nodes"], 600);
    assert!(dir.join("o.order").exists());

    let eval = json(
        dir,
        &["search-eval", "--index", "i.hlx", "--data", "x.fvecs", "--queries", "q.fvecs", "--baseline", "b.hlb", "--ef-search", "10", "--ef-search", "80"],
    );
    let rows = eval["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let r10 = rows[0]["mean_recall"].as_f64().unwrap();
    let r80 = rows[1]["mean_recall"].as_f64().unwrap();
    assert!(r80 >= r10 && r80 > 0.95, "{r10} {r80}");

    // same numbers without a cached baseline
    let eval2 = json(
        dir,
        &["search-eval", "--index", "i.hlx", "--data", "x.fvecs", "--queries", "q.fvecs", "--ef-search", "10", "--ef-search", "80"],
    );
    assert_eq!(eval["rows"], eval2["rows"]);

    let stats = json(dir, &["graph-stats", "--index", "i.hlx", "--data", "x.fvecs"]);
    assert_eq!(stats["connected_components_layer0"], 1);
}

#[test]
fn builds_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    for out in ["a.hlx", "b.hlx"] {
        json(dir, &["build", "--data", "x.fvecs", "--order", "random", "--seed", "9", "--out", out]);
    }
    assert_eq!(std::fs::read(dir.join("a.hlx")).unwrap(), std::fs::read(dir.join("b.hlx")).unwrap());
}

#[test]
fn experiment_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = r#"{
        "name": "cli",
        "seed": 4,
        "dataset": {"kind": "synth", "d": 16, "k": 4, "n": 800},
        "queries": {"kind": "generated", "n": 30},
        "orders": [{"strategy": "random", "seeds": [1, 2]}, {"strategy": "lid_desc"}],
        "lid_neighbours": 20
    }"#;
    std::fs::write(dir.join("exp.json"), config).unwrap();
    json(dir, &["experiment", "--config", "exp.json", "--out", "run"]);
    for f in ["report.json", "report.csv", "manifest.json"] {
        assert!(dir.join("run").join(f).exists(), "{f}");
    }
    let out = hnswlab(dir, &["report", "run/report.json", "--csv"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.lines().count() > 1);

    json(dir, &["experiment", "--manifest", "run/manifest.json", "--out", "rerun"]);
    let a: Value = serde_json::from_slice(&std::fs::read(dir.join("run/report.json")).unwrap()).unwrap();
    let b: Value = serde_json::from_slice(&std::fs::read(dir.join("rerun/report.json")).unwrap()).unwrap();
    let recalls = |v: &Value| -> Vec<Value> { v["rows"].as_array().unwrap().iter().map(|r| r["per_query_recall"].clone()).collect() };
    assert_eq!(recalls(&a), recalls(&b));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let usage = hnswlab(dir, &["build", "--data", "x.fvecs", "--M", "1", "--out", "i.hlx"]);
    assert_eq!(usage.status.code(), Some(2));
    let unknown = hnswlab(dir, &["no-such-command"]);
    assert_eq!(unknown.status.code(), Some(2));

    let missing = hnswlab(dir, &["id-estimate", "missing.fvecs"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error:"));

    std::fs::write(dir.join("bad.fvecs"), [1u8, 0, 0]).unwrap();
    let corrupt = hnswlab(dir, &["id-estimate", "bad.fvecs"]);
    assert_eq!(corrupt.status.code(), Some(3));

    // index built for a different dataset
    synth(dir);
    json(dir, &["build", "--data", "x.fvecs", "--out", "i.hlx"]);
    let out = hnswlab(dir, &["graph-stats", "--index", "i.hlx", "--data", "q.fvecs"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_mentions_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hnswlab(tmp.path(), &["build", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("--ef-construction"));
    assert!(text.to_lowercase().contains("exit"));
}
