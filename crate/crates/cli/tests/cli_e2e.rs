//! End-to-end tests driving the compiled binary: determinism, manifest
//! round-trips, overrides, exit codes, and the compare pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinbath"))
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let base = "
[bath]
n_spins = 30
freq_width = 2.0
target_rate = 0.05
seed = 11

[run]
method = \"ode\"
t_final = 30.0

[snapshots]
kind = \"linear\"
count = 60

[[windows]]
start = 20.0
end = 30.0

[overlays]
kinds = [\"exponential\"]

[fit]
start = 5.0
end = 25.0

[output]
bins = 6
";
    let path = dir.join("config.toml");
    fs::write(&path, format!("{base}\n{extra}")).unwrap();
    path
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn assert_same_bytes(a: &Path, b: &Path) {
    let ba = fs::read(a).unwrap();
    let bb = fs::read(b).unwrap();
    assert_eq!(ba, bb, "{} and {} differ", a.display(), b.display());
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
    ]);
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    for f in [
        "trajectory.csv",
        "residuals.csv",
        "windowed.csv",
        "binned.csv",
        "overlay_time.csv",
    ] {
        assert_same_bytes(&out1.join(f), &out2.join(f));
    }
}

#[test]
fn different_seed_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
    ]);
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "12",
        "--out",
        out2.to_str().unwrap(),
    ]);
    let a = fs::read(out1.join("trajectory.csv")).unwrap();
    let b = fs::read(out2.join("trajectory.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn manifest_rerun_reproduces_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
    ]);
    let manifest = out1.join("manifest.json");
    run_ok(&[
        "simulate",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    for f in [
        "trajectory.csv",
        "residuals.csv",
        "windowed.csv",
        "binned.csv",
        "overlay_time.csv",
    ] {
        assert_same_bytes(&out1.join(f), &out2.join(f));
    }
}

#[test]
fn set_override_reaches_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = dir.path().join("a");
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "run.t_final=10",
        "--set",
        "snapshots.count=10",
        "--set",
        "windows=[]",
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let last = text.lines().last().unwrap();
    assert!(
        last.starts_with("10,"),
        "last snapshot should sit at t = 10"
    );
    // 10 intervals -> 11 rows plus header.
    assert_eq!(text.lines().count(), 12);
}

#[test]
fn unknown_config_key_exits_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = bin()
        .args([
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--set",
            "run.bogus=1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bogus"), "stderr was: {stderr}");
}

#[test]
fn invalid_config_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[bath]\nn_spins = \"many\"\n").unwrap();
    let out = bin()
        .args(["simulate", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn residual_breach_exits_two_but_writes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = dir.path().join("a");
    let output = bin()
        .args([
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--set",
            "run.energy_tolerance=1e-18",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["result"]["breach"], serde_json::Value::Bool(true));
    for f in manifest["result"]["files"].as_array().unwrap() {
        let name = f.as_str().unwrap();
        assert!(out.join(name).exists(), "{name} missing despite breach");
    }
}

#[test]
fn compare_agrees_across_wide_and_long_formats() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let wide = dir.path().join("wide");
    let long = dir.path().join("long");
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        wide.to_str().unwrap(),
    ]);
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "output.format=\"long\"",
        "--out",
        long.to_str().unwrap(),
    ]);
    let cmp_dir = dir.path().join("cmp");
    run_ok(&[
        "compare",
        wide.join("trajectory.csv").to_str().unwrap(),
        long.join("trajectory.csv").to_str().unwrap(),
        "--out",
        cmp_dir.to_str().unwrap(),
    ]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cmp_dir.join("compare.json")).unwrap()).unwrap();
    assert_eq!(summary["max_abs_diff"].as_f64().unwrap(), 0.0);
    assert_eq!(summary["n_times"].as_i64().unwrap(), 61);
}

#[test]
fn compare_rejects_disjoint_supports() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(&a, "t,pop_qubit\n0,1\n1,0.9\n").unwrap();
    fs::write(&b, "t,pop_qubit\n5,0.5\n6,0.4\n").unwrap();
    let out = bin()
        .args(["compare", a.to_str().unwrap(), b.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("disjoint"), "stderr was: {stderr}");
}

#[test]
fn compare_interpolates_between_grids() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    // Same straight line sampled on offset grids: lerp is exact.
    fs::write(&a, "t,pop_qubit\n0.5,0.95\n1.5,0.85\n").unwrap();
    fs::write(&b, "t,pop_qubit\n0,1\n1,0.9\n2,0.8\n").unwrap();
    let cmp_dir = dir.path().join("cmp");
    run_ok(&[
        "compare",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--interpolate",
        "--out",
        cmp_dir.to_str().unwrap(),
    ]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cmp_dir.join("compare.json")).unwrap()).unwrap();
    assert!(summary["max_abs_diff"].as_f64().unwrap() < 1e-12);
}

#[test]
fn preset_dump_is_a_loadable_config() {
    for name in ["fig2", "fig3"] {
        let out = run_ok(&["preset", name, "--dump-config"]);
        let text = String::from_utf8(out.stdout).unwrap();
        let parsed: toml::Value = text.parse().unwrap();
        assert!(parsed.get("bath").is_some(), "{name} preset has no bath");
    }
}

#[test]
fn markov_t0_matches_golden_rule_decay() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = dir.path().join("mk");
    run_ok(&[
        "markov",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(out.join("markov.csv")).unwrap();
    for line in text.lines().skip(1) {
        let mut parts = line.split(',');
        let t: f64 = parts.next().unwrap().parse().unwrap();
        let p: f64 = parts.next().unwrap().parse().unwrap();
        let g: f64 = parts.next().unwrap().parse().unwrap();
        assert_eq!(p, (-0.05 * t).exp(), "excited column at t = {t}");
        assert!((p + g - 1.0).abs() < 1e-15);
    }
}

#[test]
fn modes_table_is_complete_and_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = dir.path().join("md");
    run_ok(&[
        "modes",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(out.join("modes.csv")).unwrap();
    let mut total_weight = 0.0;
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let mut parts = line.split(',');
        let _index: usize = parts.next().unwrap().parse().unwrap();
        let _freq: f64 = parts.next().unwrap().parse().unwrap();
        total_weight += parts.next().unwrap().parse::<f64>().unwrap();
        rows += 1;
    }
    assert_eq!(rows, 31);
    // Qubit weights over all modes resolve the identity.
    assert!((total_weight - 1.0).abs() < 1e-12);
}

#[test]
fn conflicting_mode_flags_are_rejected() {
    let out = bin()
        .args(["simulate", "--deterministic", "--fast"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = bin().args(["simulate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--config"));
}
