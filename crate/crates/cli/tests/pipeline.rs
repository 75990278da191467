use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const CONFIG: &str = r#"
[data]
input = "data.csv"
output_dir = "out"
coordinate_scale = 10.0

[episodes]
block_length = 2

[synth]
nx = 6
ny = 6
years = 6
range = 0.4
seed = 7

[diagnostics]
waic_samples = 200
n_sim = 500
# rings narrower than the grid spacing would leave the first one empty
rings = 3

[chi]
rings = 3
"#;

fn condex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_condex"))
        .current_dir(dir)
        .args(["-c", "run.toml"])
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = condex(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn run_pipeline() -> tempfile::TempDir {
    let dir = workspace(CONFIG);
    ok(dir.path(), &["synth", "--out", "data.csv"]);
    for step in ["transform", "decluster", "fit", "diagnose", "chi"] {
        ok(dir.path(), &[step]);
    }
    dir
}

fn read(dir: &tempfile::TempDir, name: &str) -> Vec<u8> {
    fs::read(dir.path().join("out").join(name)).unwrap()
}

#[test]
fn pipeline_is_deterministic_and_report_names_the_fit() {
    let a = run_pipeline();
    let b = run_pipeline();
    for name in ["laplace.csv", "marginals.json", "episodes.csv", "cluster_counts.csv", "fit.json", "diagnostics.json", "regions.csv", "chi.csv", "chi_empirical.csv"] {
        assert!(read(&a, name) == read(&b, name), "{name} differs between runs");
    }

    let fit = read(&a, "fit.json");
    let report: serde_json::Value = serde_json::from_slice(&read(&a, "diagnostics.json")).unwrap();
    assert_eq!(report["fit_hash"].as_str().unwrap(), hex::encode(Sha256::digest(&fit)));
    assert!(report["waic"]["waic"].as_f64().unwrap().is_finite());

    let marginals: serde_json::Value = serde_json::from_slice(&read(&a, "marginals.json")).unwrap();
    let sites = marginals.as_array().unwrap();
    assert_eq!(sites.len(), 36);
    assert!(sites.iter().all(|m| (m["lambda_v"].as_f64().unwrap() - 0.05).abs() < 1e-12));
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = workspace("[marginal]\nquantle = 0.9\n");
    let out = condex(dir.path(), &["transform"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["class"], "config");
}

#[test]
fn out_of_range_value_exits_with_config_code() {
    let dir = workspace("[marginal]\nquantile = 1.5\n");
    assert_eq!(condex(dir.path(), &["transform"]).status.code(), Some(2));
}

#[test]
fn bad_data_exits_with_data_code_and_writes_nothing() {
    let dir = workspace(CONFIG);
    fs::write(dir.path().join("data.csv"), "site_id,lon,lat,time,value\na,0,0,1,1.0\na,0,0,1,2.0\n").unwrap();
    let out = condex(dir.path(), &["transform"]);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("line 3"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn fit_before_decluster_is_a_data_error() {
    let dir = workspace(CONFIG);
    ok(dir.path(), &["synth", "--out", "data.csv"]);
    ok(dir.path(), &["transform"]);
    assert_eq!(condex(dir.path(), &["fit"]).status.code(), Some(3));
    assert!(!dir.path().join("out").join("fit.json").exists());
}
