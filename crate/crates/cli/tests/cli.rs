use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn essm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_essm"))
        .args(args)
        .current_dir(dir)
        .env("ESSM_CACHE_DIR", dir.join("cache"))
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn essm")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

const COPY: &str = r#"{
    "model": {"d_model": 8, "d_gate": 4, "depth": 1, "seq_len": 16, "capacity": 8, "budget_set": [2, 4, 8]},
    "train": {"batch_size": 4, "steps": 6, "log_every": 2, "checkpoint_every": 3},
    "task": {"kind": "copy", "n_symbols": 3, "delay": 2, "train_samples": 16, "test_samples": 8},
    "paths": {"checkpoint_dir": "ckpt", "report_dir": "rep"}
}"#;

const LDS: &str = r#"{
    "model": {"d_model": 6, "d_gate": 4, "depth": 1, "seq_len": 16, "capacity": 8, "budget_set": [2, 4, 8]},
    "train": {"batch_size": 4, "steps": 4},
    "task": {"kind": "lds", "state_dim": 4, "input_dim": 2, "output_dim": 2,
             "train_samples": 8, "test_samples": 4},
    "paths": {"checkpoint_dir": "ckpt", "report_dir": "rep"}
}"#;

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), config).unwrap();
    dir
}

#[test]
fn basis_builds_then_hits_the_cache() {
    let dir = setup(COPY);
    let first: Value = serde_json::from_str(&ok(&essm(dir.path(), &["basis", "--seq-len", "32", "--capacity", "8"]))).unwrap();
    assert_eq!(first["cache_hit"], false);
    assert!(Path::new(first["path"].as_str().unwrap()).exists());
    let ratio = first["decay_ratio"].as_f64().unwrap();
    assert!(ratio > 0.0 && ratio < 1e-3, "{ratio}");
    let second: Value = serde_json::from_str(&ok(&essm(dir.path(), &["basis", "--seq-len", "32", "--capacity", "8"]))).unwrap();
    assert_eq!(second["cache_hit"], true);
    assert_eq!(first["sigma_1"], second["sigma_1"]);

    let bad = essm(dir.path(), &["basis", "--seq-len", "4", "--capacity", "8"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn train_writes_artifacts_and_resumes_identically() {
    let dir = setup(COPY);
    let d = dir.path();
    ok(&essm(d, &["train", "--config", "run.json"]));
    for f in ["final.essm", "ckpt-000003.essm", "train_log.jsonl", "train_summary.json", "resolved_config.json"] {
        assert!(d.join("ckpt").join(f).exists(), "missing {f}");
    }
    let log = std::fs::read_to_string(d.join("ckpt/train_log.jsonl")).unwrap();
    let records: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.iter().map(|r| r["step"].as_u64().unwrap()).collect::<Vec<_>>(), [2, 4, 6]);
    assert!(records.iter().all(|r| r["k_train_histogram"].is_object() && r["lr"].is_number()));
    let resolved = read_json(d.join("ckpt/resolved_config.json"));
    assert_eq!(resolved["model"]["output_dim"], 3);
    assert_eq!(resolved["schema_version"], 1);
    let full = std::fs::read(d.join("ckpt/final.essm")).unwrap();

    std::fs::rename(d.join("ckpt/final.essm"), d.join("first.essm")).unwrap();
    ok(&essm(d, &["train", "--config", "run.json", "--resume", "ckpt/ckpt-000003.essm"]));
    assert_eq!(std::fs::read(d.join("ckpt/final.essm")).unwrap(), full);

    // a config that no longer matches the checkpoint
    let other = COPY.replace("\"d_model\": 8", "\"d_model\": 10");
    std::fs::write(d.join("other.json"), other).unwrap();
    let out = essm(d, &["train", "--config", "other.json", "--resume", "first.essm"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_reports_every_budget_and_rejects_one_channel() {
    let dir = setup(LDS);
    let d = dir.path();
    ok(&essm(d, &["train", "--config", "run.json"]));
    let tsv = ok(&essm(d, &["sweep", "--checkpoint", "ckpt/final.essm", "--config", "run.json", "--budgets", "2,4,8"]));
    assert_eq!(tsv.lines().count(), 4, "{tsv}");
    let report = read_json(d.join("rep/sweep.json"));
    assert_eq!(report["budgets"], serde_json::json!([2, 4, 8]));
    assert_eq!(report["retention"][2], 1.0);
    assert!(d.join("rep/sweep.csv").exists() && d.join("rep/resolved_config.json").exists());

    let out = essm(d, &["sweep", "--checkpoint", "ckpt/final.essm", "--config", "run.json", "--budgets", "1,8"]);
    assert_eq!(out.status.code(), Some(2));

    // a basis for a different capacity
    ok(&essm(d, &["basis", "--seq-len", "16", "--capacity", "6", "--out", "other"]));
    let basis = std::fs::read_dir(d.join("other")).unwrap().next().unwrap().unwrap().path();
    let out = essm(
        d,
        &["sweep", "--checkpoint", "ckpt/final.essm", "--config", "run.json", "--budgets", "2,8", "--basis", basis.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_config_key_names_its_path() {
    let dir = setup(&COPY.replace("\"steps\": 6", "\"steps\": 6, \"learning_rate\": 0.1"));
    let out = essm(dir.path(), &["train", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train") && err.contains("learning_rate"), "{err}");
}

#[test]
fn gradcheck_passes_on_the_builtin_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&essm(dir.path(), &["gradcheck", "--coordinates", "60"]));
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 2, "{out}");
    let report = read_json(dir.path().join("reports/gradcheck.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["reports"][1]["budget"], 6);
}

#[test]
fn audit_finds_no_violations() {
    let dir = setup(LDS);
    let d = dir.path();
    ok(&essm(d, &["train", "--config", "run.json"]));
    let out = ok(&essm(d, &["audit", "--checkpoint", "ckpt/final.essm", "--budgets", "2,4,8", "--trials", "5"]));
    assert!(out.starts_with("PASS"), "{out}");
    let report = read_json(d.join("reports/audit.json"));
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
    assert_eq!(report["checks"], 5 * 3 * 16);
}

#[test]
fn ablate_covers_all_variants() {
    let dir = setup(LDS);
    let d = dir.path();
    ok(&essm(d, &["ablate", "--config", "run.json", "--seeds", "0", "--budgets", "2,8", "--steps", "2"]));
    let report = read_json(d.join("rep/ablation.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    let table = std::fs::read_to_string(d.join("rep/ablation.tsv")).unwrap();
    assert_eq!(table.lines().count(), 6, "{table}");
}

#[test]
fn flops_are_affine_in_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out: Value = serde_json::from_str(&ok(&essm(
        dir.path(),
        &["flops", "--seq-len", "64", "--d-model", "16", "--d-gate", "8", "--capacity", "8", "--budgets", "2,4,6,8"],
    )))
    .unwrap();
    let total: Vec<f64> = out["estimates"].as_array().unwrap().iter().map(|e| e["total"].as_f64().unwrap()).collect();
    assert_eq!(total.len(), 4);
    let step = total[1] - total[0];
    assert!(step > 0.0);
    for w in total.windows(2) {
        assert!(((w[1] - w[0]) - step).abs() <= 1e-9 * step);
    }
    let bad = essm(dir.path(), &["flops", "--capacity", "8", "--budgets", "2,9"]);
    assert_eq!(bad.status.code(), Some(2));
}
