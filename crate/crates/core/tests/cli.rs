use std::fs;
use std::path::Path;
use std::process::Command;

fn profiti(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_profiti"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("PROFITI_SEED")
        .env_remove("PROFITI_THREADS")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const SPEC: &str = r#"{"n_series": 40, "channels": 2, "max_queries": 4, "family": "correlated-heavytail"}"#;

const CONFIG: &str = r#"{
  "data": {"path": "data.jsonl"},
  "epochs": 1,
  "batch_size": 8,
  "model": {"encoder": {"d": 8, "layers": 1, "heads": 1, "n_freqs": 2, "d_channel": 2, "d_value": 2}, "blocks": 1},
  "eval": {"n_samples": 10, "folds": 1, "seed": 0}
}"#;

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("spec.json"), SPEC).unwrap();
    fs::write(d.join("cfg.json"), CONFIG).unwrap();

    let (code, _, err) = profiti(&["generate-data", "--spec", "spec.json", "--out", "data.jsonl", "--seed", "3"], d);
    assert_eq!(code, 0, "{err}");
    assert_eq!(fs::read_to_string(d.join("data.jsonl")).unwrap().lines().count(), 40);

    let (code, out, err) = profiti(&["train", "--config", "cfg.json", "--out", "run"], d);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("njNLL"));
    for f in ["ckpt/manifest.json", "ckpt/params.bin", "run.json", "report.json", "loss_curve.csv", "loss_curve.svg"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }

    let (code, _, err) = profiti(
        &["evaluate", "--ckpt", "run/ckpt", "--data", "data.jsonl", "--report", "r.json", "--samples", "10", "--csv", "rows.csv"],
        d,
    );
    assert_eq!(code, 0, "{err}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert!(report["njnll"]["mean"].as_f64().unwrap().is_finite());
    assert_eq!(report["instances"], 40);

    let (code, _, err) = profiti(
        &["sample", "--ckpt", "run/ckpt", "--data", "data.jsonl", "--n", "5", "--out", "s.csv", "--svg", "fan.svg"],
        d,
    );
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(d.join("s.csv")).unwrap();
    assert!(csv.starts_with("id,sample,query,t,channel,value"));
    assert!(fs::read_to_string(d.join("fan.svg")).unwrap().starts_with("<svg"));

    let (code, out, err) = profiti(&["ablate", "--config", "cfg.json", "--out", "table.json"], d);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 7);
    let table: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("table.json")).unwrap()).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.json"), r#"{"epochs": 1, "batchsize": 3}"#).unwrap();
    let (code, _, err) = profiti(&["train", "--config", "bad.json", "--out", "run"], d);
    assert_eq!(code, 2);
    assert!(err.contains("batchsize"), "{err}");
    let (code, _, _) = profiti(&["train", "--config", "missing.json", "--out", "run"], d);
    assert_eq!(code, 2);
    fs::write(d.join("spec.json"), r#"{"missing_fraction": 1.5}"#).unwrap();
    let (code, _, _) = profiti(&["generate-data", "--spec", "spec.json", "--out", "x.jsonl"], d);
    assert_eq!(code, 2);
}

#[test]
fn schema_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("ckpt")).unwrap();
    fs::write(d.join("ckpt/manifest.json"), r#"{"schema_version": 0}"#).unwrap();
    fs::write(d.join("data.jsonl"), "").unwrap();
    let (code, _, err) = profiti(&["evaluate", "--ckpt", "ckpt", "--data", "data.jsonl", "--report", "r.json"], d);
    assert_eq!(code, 2);
    assert!(err.contains("schema version"), "{err}");
}

#[test]
fn numeric_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut lines = String::new();
    for i in 0..10 {
        lines.push_str(&format!(
            "{{\"id\":\"s{i}\",\"C\":1,\"obs\":[[0.0,0,{}],[0.1,0,0.5]],\"qry\":[[0.5,0]],\"ans\":[1e308]}}\n",
            i as f64 * 0.1
        ));
    }
    fs::write(d.join("data.jsonl"), lines).unwrap();
    fs::write(d.join("cfg.json"), CONFIG).unwrap();
    let (code, _, err) = profiti(&["train", "--config", "cfg.json", "--out", "run"], d);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("non-finite"), "{err}");
}
