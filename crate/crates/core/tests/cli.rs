use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{
  "data": {"w_grid": [12, 14], "n_seeds": 3, "load_case": {"duration": 150}},
  "fit": {"population": 10, "generations": 5, "assembly": {"n_train": 2}},
  "doe": {"wind_speeds": [14], "n_seeds": 1, "load_case": {"duration": 100}}
}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lpv-dfsm"));
    c.env_remove("RUST_LOG");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.json"), SMALL).unwrap();
    dir
}

fn manifest(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn pipeline_smoke_run() {
    let dir = setup();
    let d = dir.path();
    let cfg = ["--config", "small.json"];

    let out = run(d, &[&cfg[..], &["--out", "gen", "generate-data"]].concat());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("6 records"), "{stdout}");
    assert_eq!(stdout.matches("[ 12.00  14.00]").count(), 3);

    assert!(run(d, &[&cfg[..], &["--out", "fit", "fit", "--data", "gen/dataset"]].concat()).status.success());
    assert!(d.join("fit/model.json").exists());
    let fit_csv = fs::read_to_string(d.join("fit/fit.csv")).unwrap();
    assert_eq!(fit_csv.lines().count(), 3);

    let val = run(
        d,
        &[&cfg[..], &["--out", "val", "validate", "--data", "gen/dataset", "--model", "fit/model.json"]].concat(),
    );
    assert!(val.status.success());
    let csv = fs::read_to_string(d.join("val/validate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "one held-out seed → one row");
    assert!(csv.lines().nth(1).unwrap().starts_with("dfsm,14.0,3,"));

    assert!(run(d, &[&cfg[..], &["--out", "sim", "simulate", "--model", "fit/model.json"]].concat()).status.success());
    assert!(d.join("sim/records/dfsm_000.json").exists());

    assert!(run(d, &[&cfg[..], &["--out", "met", "metrics", "--records", "sim/records", "gen/dataset"]].concat()).status.success());
    let metrics = fs::read_to_string(d.join("met/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 1 + 6);

    // manifests record input hashes matching the producing run's outputs
    let gen = manifest(&d.join("gen"));
    let fit = manifest(&d.join("fit"));
    let produced = gen["outputs"][0]["sha256"].as_str().unwrap();
    let consumed = fit["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .find(|i| i["path"] == "gen/dataset")
        .unwrap();
    assert_eq!(consumed["sha256"], produced);
    assert_eq!(fit["seed"], 0);
    assert!(fit["timings"]["total_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn missing_config_is_an_error() {
    let dir = setup();
    let out = run(dir.path(), &["--config", "absent.json", "generate-data"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.json"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_without_held_out_seeds() {
    let dir = setup();
    let d = dir.path();
    let cfg = ["--config", "small.json"];
    let gen = bin()
        .current_dir(d)
        .args([&cfg[..], &["--out", "gen", "generate-data"]].concat())
        .env("LPV_DFSM_DATA__N_SEEDS", "2")
        .env("LPV_DFSM_DATA__W_GRID", "[14]")
        .output()
        .unwrap();
    assert!(gen.status.success());
    assert!(run(d, &[&cfg[..], &["--out", "fit", "fit", "--data", "gen/dataset"]].concat()).status.success());
    let out = run(
        d,
        &[&cfg[..], &["--out", "val", "validate", "--data", "gen/dataset", "--model", "fit/model.json"]].concat(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no test seeds"));
}

#[test]
fn doe_grid_has_twenty_five_rows() {
    let dir = setup();
    let out = run(dir.path(), &["--config", "small.json", "--out", "doe", "doe", "--grid", "5,5"]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("doe/doe.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "omega_pc,zeta_pc,del_t,aep,scaled_del_t,wall_time_s,status"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r.ends_with(",ok")));
}

fn mask_timing(csv: &str, column: &str) -> String {
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    let idx = header.split(',').position(|h| h == column).unwrap();
    let mut out = vec![header.to_string()];
    for l in lines {
        let mut f: Vec<&str> = l.split(',').collect();
        f[idx] = "-";
        out.push(f.join(","));
    }
    out.join("\n")
}

#[test]
fn repeated_runs_are_identical() {
    let dir = setup();
    let d = dir.path();
    for out in ["a", "b"] {
        assert!(run(d, &["--config", "small.json", "--out", out, "generate-data"]).status.success());
        assert!(run(d, &["--config", "small.json", "--out", out, "doe", "--grid", "3,3"]).status.success());
    }
    let (a, b) = (fs::read_to_string(d.join("a/doe.csv")).unwrap(), fs::read_to_string(d.join("b/doe.csv")).unwrap());
    assert_eq!(mask_timing(&a, "wall_time_s"), mask_timing(&b, "wall_time_s"));
    let ds = |p: &str| fs::read(d.join(p).join("dataset/case_s01_w01.json")).unwrap();
    assert_eq!(ds("a"), ds("b"));

    assert!(run(d, &["--config", "small.json", "--seed", "9", "--out", "c", "generate-data"]).status.success());
    assert_ne!(ds("a"), ds("c"));
}
