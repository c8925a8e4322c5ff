use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn heatinv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatinv"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "[grid]\nn_x = 17\nn_t = 17\n\n[chain]\nn_steps = 200\nburn_in = 50\n\n\
         [study]\nn_grid = [16, 32, 64]\nreplicates = 3\nbootstrap = 20\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn error_category(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).expect("error is JSON");
    v["error"]["category"].as_str().unwrap().to_string()
}

#[test]
fn simulate_then_sample_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    assert!(heatinv(&["simulate", "--n", "40", "--config", &cfg, "--out", &p("sim")]).status.success());
    let data = p("sim/data.csv");
    for out in ["a", "b"] {
        assert!(heatinv(&["sample", "--data", &data, "--config", &cfg, "--out", &p(out)]).status.success());
    }
    // the manifests differ only in the recorded output directory
    for name in ["chain.json", "chain.bin", "posterior_mean.csv", "diagnostics.json"] {
        assert!(fs::read(p(&format!("a/{name}"))).unwrap() == fs::read(p(&format!("b/{name}"))).unwrap(), "{name}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(p("a/manifest.json")).unwrap()).unwrap();
    assert!(manifest["seeds"]["chain"].is_u64());
    assert_eq!(manifest["config"]["grid"]["n_x"], 17);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);
}

#[test]
fn rates_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("rates");
    let run = heatinv(&["rates", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let mut rdr = csv::Reader::from_path(out.join("records.csv")).unwrap();
    assert_eq!(rdr.records().count(), 9);
    let slopes: Value = serde_json::from_str(&fs::read_to_string(out.join("slopes.json")).unwrap()).unwrap();
    assert_eq!(slopes.as_array().unwrap().len(), 3);
    assert!(out.join("errors_long.csv").exists());
}

#[test]
fn tampered_output_fails_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("lb");
    assert!(heatinv(&["lowerbound", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    fs::write(out.join("lowerbound.json"), "{}\n").unwrap();
    let replay = heatinv(&[
        "replay",
        "--manifest",
        out.join("manifest.json").to_str().unwrap(),
        "--out",
        dir.path().join("again").to_str().unwrap(),
    ]);
    assert!(!replay.status.success());
    assert_eq!(error_category(&replay), "reproducibility");
}

#[test]
fn errors_are_reported_with_a_category() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();

    let unknown = heatinv(&["rates", "--bogus"]);
    assert!(!unknown.status.success());
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));
    assert!(!heatinv(&["frobnicate"]).status.success());

    let missing = heatinv(&["rates", "--config", "/nonexistent/c.toml", "--out", out]);
    assert!(!missing.status.success());
    assert_eq!(error_category(&missing), "invalid-config");

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[study]\nreplicates = 1\n").unwrap();
    let invalid = heatinv(&["rates", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(error_category(&invalid), "invalid-config");

    let no_data = heatinv(&["sample", "--data", "/nonexistent/data.csv", "--out", out]);
    assert!(!no_data.status.success());
    assert!(serde_json::from_slice::<Value>(&no_data.stderr).is_ok());
}
