use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use laconv::gconv::{build_model, write_checkpoint};
use laconv::train::{load_dataset, TrainConfig};

fn laconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laconv"))
        .args(args)
        .env_remove("LACONV_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = laconv(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn pendulum_config(lr: f64) -> String {
    format!(
        r#"{{
  "task": "pendulum", "group": "SO2", "lr": {lr}, "optimizer": "adam",
  "kernel_hidden": 8, "n_hidden_layers": 1, "hidden_channels": 4,
  "batch_size": 16, "epochs": 2, "n_algebra_samples": 4, "seed": 11,
  "data": {{"kind": "pendulum", "params": {{"m": 1.0, "L": 1.0, "g": 9.8, "lambda": 0.2,
    "theta0": 1.0471975511965976, "omega0": 0.0, "dt": 0.01, "n_steps": 300}}}}
}}"#
    )
}

fn strict_c4_config() -> String {
    r#"{
  "task": "classify", "group": "SO2", "lr": 0.01, "optimizer": "adam",
  "kernel_hidden": 8, "n_hidden_layers": 1, "hidden_channels": 4,
  "batch_size": 8, "epochs": 2, "n_algebra_samples": 4, "sampling": "c4_grid",
  "strict_mode": true, "resample": "exact_c4", "seed": 5,
  "data": {"kind": "synthetic", "classes": 2, "size": 8, "angle_law": "c4",
    "train_per_class": 6, "test_per_class": 2, "seed": 2}
}"#
    .to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn fickett_prints_27() {
    let out = ok(&["fickett", "--eps", "1", "--n", "2"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "27");
}

#[test]
fn simulate_pendulum_emits_6000_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    ok(&["simulate-pendulum", "--out", p(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,y"));
    assert_eq!(lines.count(), 6000);
}

#[test]
fn exit_codes_separate_usage_from_runtime_errors() {
    assert_eq!(laconv(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(laconv(&["frobnicate"]).status.code(), Some(1));
    let out = laconv(&["fickett", "--eps", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert_eq!(laconv(&["--help"]).status.code(), Some(0));
    assert_eq!(laconv(&["train", "--config", "/no/such/config.json"]).status.code(), Some(2));
    assert_eq!(laconv(&["fickett", "--eps", "1", "--n", "1"]).status.code(), Some(2));
}

#[test]
fn config_with_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = pendulum_config(1e-3).replacen("\"seed\"", "\"momentum\": 0.9, \"seed\"", 1);
    let path = write(dir.path(), "c.json", &cfg);
    let out = laconv(&["train", "--config", p(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("momentum"));
}

#[test]
fn zero_lr_leaves_the_checkpoint_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let text = pendulum_config(0.0);
    let path = write(dir.path(), "c.json", &text);
    let ckpt = dir.path().join("m.ckpt");
    ok(&["train", "--config", p(&path), "--checkpoint", p(&ckpt), "--out", p(&dir.path().join("r.json"))]);

    let cfg = TrainConfig::from_json(&text).unwrap();
    let arch = cfg.architecture(&load_dataset(&cfg.data).unwrap()).unwrap();
    let mut fresh = Vec::new();
    write_checkpoint(&build_model(&arch).unwrap(), &mut fresh).unwrap();
    assert_eq!(std::fs::read(&ckpt).unwrap(), fresh);
}

#[test]
fn train_is_byte_reproducible_and_seed_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &pendulum_config(1e-2));
    let run = |tag: &str, extra: &[&str]| {
        let out = dir.path().join(format!("{tag}.json"));
        let ck = dir.path().join(format!("{tag}.ckpt"));
        let mut args = vec!["train", "--config", p(&cfg), "--out", p(&out), "--checkpoint", p(&ck)];
        args.extend_from_slice(extra);
        ok(&args);
        (std::fs::read(out).unwrap(), std::fs::read(ck).unwrap())
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    assert_eq!(a, b);
    let c = run("reseeded", &["--seed", "12"]);
    assert_ne!(a.1, c.1);
    let record: serde_json::Value = serde_json::from_slice(&a.0).unwrap();
    assert_eq!(record["per_epoch"].as_array().unwrap().len(), 2);
    assert!(record.get("wall_time").is_none());
    let timed = dir.path().join("t.json");
    ok(&["train", "--config", p(&cfg), "--out", p(&timed), "--record-time"]);
    let timed: serde_json::Value = serde_json::from_slice(&std::fs::read(timed).unwrap()).unwrap();
    assert!(timed["wall_time"].as_f64().unwrap() > 0.0);
}

#[test]
fn strict_checkpoint_is_invariant_under_quarter_turns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &strict_c4_config());
    let ckpt = dir.path().join("m.ckpt");
    ok(&["train", "--config", p(&cfg), "--checkpoint", p(&ckpt), "--out", p(&dir.path().join("r.json"))]);
    let data = dir.path().join("d.lads");
    ok(&["gen-synthetic", "--classes", "2", "--per-class", "3", "--size", "8", "--angle-law", "c4", "--seed", "4", "--out", p(&data)]);
    let report = dir.path().join("e.json");
    ok(&[
        "eval-equivariance", "--checkpoint", p(&ckpt), "--data", p(&data), "--group", "SO2",
        "--samples", "8", "--sampler", "quarter-turns", "--out", p(&report),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["report_version"], 1);
    assert!(v["max_defect"].as_f64().unwrap() < 1e-8);
    assert_eq!(laconv(&["bound-report", "--checkpoint", p(&ckpt)]).status.code(), Some(2));
}

#[test]
fn time_checkpoint_has_no_equivariance_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &pendulum_config(1e-2));
    let ckpt = dir.path().join("m.ckpt");
    ok(&["train", "--config", p(&cfg), "--checkpoint", p(&ckpt), "--out", p(&dir.path().join("r.json"))]);
    let data = dir.path().join("d.lads");
    ok(&["gen-synthetic", "--classes", "2", "--per-class", "1", "--size", "8", "--out", p(&data)]);
    let out = laconv(&["eval-equivariance", "--checkpoint", p(&ckpt), "--data", p(&data), "--group", "SO2"]);
    assert_eq!(out.status.code(), Some(2));

    let report = dir.path().join("b.json");
    ok(&["bound-report", "--checkpoint", p(&ckpt), "--seed", "3", "--out", p(&report)]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    for key in ["delta_raw", "k_hat", "bound", "measured_deviation", "holds"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn grid_search_resumes_to_the_same_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let grid = format!(r#"{{"base": {}, "lr": [0.001, 0.01], "hidden_channels": [2, 4]}}"#, pendulum_config(1e-3));
    let grid = write(dir.path(), "g.json", &grid);
    let full = dir.path().join("full");
    let part = dir.path().join("part");
    ok(&["grid-search", "--grid", p(&grid), "--seeds", "2", "--out", p(&full), "--threads", "2"]);
    ok(&["grid-search", "--grid", p(&grid), "--seeds", "2", "--out", p(&part), "--max-runs", "3"]);
    let ledger = std::fs::read_to_string(part.join("ledger.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), 3);
    let out = Command::new(env!("CARGO_BIN_EXE_laconv"))
        .args(["grid-search", "--grid", p(&grid), "--seeds", "2", "--out", p(&part)])
        .env("LACONV_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(part.join("ledger.jsonl")).unwrap().lines().count(), 8);
    assert_eq!(
        std::fs::read(full.join("ranking.json")).unwrap(),
        std::fs::read(part.join("ranking.json")).unwrap()
    );
    let bad = Command::new(env!("CARGO_BIN_EXE_laconv"))
        .args(["grid-search", "--grid", p(&grid), "--seeds", "1", "--out", p(&dir.path().join("x"))])
        .env("LACONV_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn preset_grid_enumerates_the_pendulum_table() {
    let cfg: serde_json::Value = serde_json::from_str(&pendulum_config(1e-3)).unwrap();
    let spec = laconv::train::GridSpec::from_json(
        &serde_json::json!({"base": cfg, "preset": "pendulum_full"}).to_string(),
    )
    .unwrap();
    assert_eq!(spec.configs().unwrap().len(), 256);
}

#[test]
fn ulam_maps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u.json");
    ok(&["ulam-recover", "--map", "rotation", "--angle", "0.3", "--out", p(&out)]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["n_iters"], 1);
    assert_eq!(v["max_gap"], 0.0);

    // T(x) = 2x tabulated on the points 2^k·(1, 0), 2^k·(0, 1) and 0.
    let mut table = String::from("x1,x2,y1,y2\n0,0,0,0\n");
    for k in 0..8 {
        let s = f64::powi(2.0, k);
        table.push_str(&format!("{s},0,{},0\n0,{s},0,{}\n", 2.0 * s, 2.0 * s));
    }
    let table = write(dir.path(), "t.csv", &table);
    ok(&["ulam-recover", "--map", "custom-table", "--table", p(&table), "--grid-radius", "1", "--out", p(&out)]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["isometric"], false);
    assert_eq!(laconv(&["ulam-recover", "--map", "custom-table"]).status.code(), Some(1));
}
