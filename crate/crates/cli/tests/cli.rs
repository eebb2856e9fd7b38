//! End-to-end tests of the `hftsim` binary: pipeline determinism, exit
//! codes, config-file precedence, and artifact presence.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hftsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hftsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn hftsim")
}

fn run_ok(dir: &Path, args: &[&str]) {
    let out = hftsim(dir, args);
    assert!(
        out.status.success(),
        "hftsim {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("read {name}: {e}"))
}

#[test]
fn gen_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run_ok(dir, &["gen", "--seed", "7", "--n-ticks", "2000", "--out", "a.csv"]);
    run_ok(dir, &["gen", "--seed", "7", "--n-ticks", "2000", "--out", "b.csv"]);
    assert_eq!(read(dir, "a.csv"), read(dir, "b.csv"));
    assert_eq!(read(dir, "a.csv.manifest.json").is_empty(), false);

    run_ok(dir, &["gen", "--seed", "8", "--n-ticks", "2000", "--out", "c.csv"]);
    assert_ne!(read(dir, "a.csv"), read(dir, "c.csv"));
}

#[test]
fn pipeline_repeats_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut artifacts: Vec<Vec<Vec<u8>>> = Vec::new();
    for rep in ["r1", "r2"] {
        let sub = dir.join(rep);
        fs::create_dir(&sub).unwrap();
        run_ok(&sub, &["gen", "--seed", "3", "--n-ticks", "2500", "--out", "day1.csv"]);
        run_ok(&sub, &["gen", "--seed", "4", "--n-ticks", "2500", "--out", "day2.csv"]);
        run_ok(
            &sub,
            &["pretrain", "--data", "day1.csv", "--w", "200", "--h", "50", "--seed", "5", "--out", "model.json"],
        );
        run_ok(
            &sub,
            &["run", "--data", "day2.csv", "--model", "model.json", "--w", "200", "--h", "50", "--b", "50", "--out", "out"],
        );
        artifacts.push(vec![
            read(&sub, "day1.csv"),
            read(&sub, "day2.csv"),
            read(&sub, "model.json"),
            read(&sub, "out/decision_log_SYN.csv"),
            read(&sub, "out/trades_SYN.csv"),
            read(&sub, "out/metrics.json"),
            read(&sub, "out/final_model_SYN.json"),
            read(&sub, "out/manifest.json"),
        ]);
    }
    assert_eq!(artifacts[0], artifacts[1]);
}

#[test]
fn multi_security_run_splits_per_symbol() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run_ok(dir, &["gen", "--seed", "2", "--n-ticks", "1500", "--securities", "2", "--out", "multi.csv"]);
    run_ok(
        dir,
        &["pretrain", "--data", "multi.csv", "--w", "100", "--h", "20", "--out", "model.json"],
    );
    run_ok(
        dir,
        &["run", "--data", "multi.csv", "--model", "model.json", "--w", "100", "--h", "20", "--out", "out", "--jobs", "2"],
    );
    assert!(dir.join("out/decision_log_SYN000.csv").exists());
    assert!(dir.join("out/decision_log_SYN001.csv").exists());
    let metrics: serde_json::Value =
        serde_json::from_slice(&read(dir, "out/metrics.json")).unwrap();
    assert_eq!(metrics["symbols"].as_array().unwrap().len(), 2);
    assert_eq!(metrics["merged"]["symbol"], "ALL");
}

#[test]
fn exit_codes_distinguish_usage_and_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run_ok(dir, &["gen", "--seed", "1", "--n-ticks", "1200", "--out", "day.csv"]);
    run_ok(dir, &["pretrain", "--data", "day.csv", "--w", "100", "--h", "20", "--out", "model.json"]);

    // window incompatible with the model: configuration error
    let out = hftsim(dir, &["run", "--data", "day.csv", "--model", "model.json", "--w", "10", "--out", "o1"]);
    assert_eq!(out.status.code(), Some(1));

    // unknown subcommand: usage error
    let out = hftsim(dir, &["bogus"]);
    assert_eq!(out.status.code(), Some(1));

    // missing data file: data error
    let out = hftsim(dir, &["run", "--data", "missing.csv", "--model", "model.json", "--out", "o2"]);
    assert_eq!(out.status.code(), Some(2));

    // too few ticks to pretrain: data error
    run_ok(dir, &["gen", "--seed", "1", "--n-ticks", "50", "--out", "tiny.csv"]);
    let out = hftsim(dir, &["pretrain", "--data", "tiny.csv", "--w", "100", "--h", "20", "--out", "m2.json"]);
    assert_eq!(out.status.code(), Some(2));

    // --help is not an error
    let out = hftsim(dir, &["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn config_file_applies_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("cfg.json"),
        r#"{"gen.n_ticks": 1100, "gen.seed": 9, "gen.symbol": "CFG"}"#,
    )
    .unwrap();
    run_ok(dir, &["gen", "--config", "cfg.json", "--out", "from_file.csv"]);
    let text = fs::read_to_string(dir.join("from_file.csv")).unwrap();
    assert_eq!(text.lines().count(), 1101); // header + ticks
    assert!(text.lines().nth(1).unwrap().contains(",CFG,"));

    // flag wins over the file entry
    run_ok(dir, &["gen", "--config", "cfg.json", "--n-ticks", "300", "--out", "overridden.csv"]);
    let text = fs::read_to_string(dir.join("overridden.csv")).unwrap();
    assert_eq!(text.lines().count(), 301);

    // unknown keys are rejected up front
    fs::write(dir.join("bad.json"), r#"{"gen.n_tick": 5}"#).unwrap();
    let out = hftsim(dir, &["gen", "--config", "bad.json", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}

#[test]
fn calibrate_reports_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run_ok(dir, &["gen", "--seed", "11", "--n-ticks", "3000", "--out", "day.csv"]);
    run_ok(dir, &["pretrain", "--data", "day.csv", "--w", "200", "--h", "50", "--out", "model.json"]);
    run_ok(
        dir,
        &["calibrate", "--data", "day.csv", "--model", "model.json", "--w", "200", "--h", "50", "--target-pct", "10", "--out", "calib.json"],
    );
    let report: serde_json::Value = serde_json::from_slice(&read(dir, "calib.json")).unwrap();
    let participation = report["participation_pct"].as_f64().unwrap();
    assert!(participation <= 10.1, "participation {participation}");
    assert!(report["threshold"].as_f64().unwrap() >= 0.0);
}

#[test]
fn sweep_writes_all_figure_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run_ok(dir, &["gen", "--seed", "21", "--n-ticks", "2000", "--out", "day1.csv"]);
    run_ok(dir, &["gen", "--seed", "22", "--n-ticks", "2000", "--out", "day2.csv"]);
    run_ok(
        dir,
        &["sweep", "--day1", "day1.csv", "--day2", "day2.csv", "--grid", "reduced", "--out", "sw"],
    );
    for name in [
        "fig4_online_vs_frozen.csv",
        "fig5_history_range.csv",
        "fig6_batch.csv",
        "fig7_arch.csv",
        "fig8_confidence.csv",
        "manifest.json",
    ] {
        let body = read(dir, &format!("sw/{name}"));
        assert!(body.len() > 10, "{name} is empty");
    }
}

#[test]
fn features_and_label_dumps() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run_ok(dir, &["gen", "--seed", "31", "--n-ticks", "800", "--out", "day.csv"]);
    run_ok(dir, &["features", "--data", "day.csv", "--w", "100", "--out", "feats.csv"]);
    run_ok(dir, &["label", "--data", "day.csv", "--h", "20", "--out", "labels.csv"]);

    let feats = fs::read_to_string(dir.join("feats.csv")).unwrap();
    assert_eq!(feats.lines().count(), 1 + 800 - 99); // header + warm ticks
    let labels = fs::read_to_string(dir.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 1 + 800 - 20);
    assert!(labels.contains("NO_MOVE"));
}
