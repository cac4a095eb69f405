use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_tess-lab");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("TESSLAB_THREADS").output().unwrap()
}

fn experiment(extra: &str) -> String {
    format!(
        r#"{{"experiment": {{"model": "voronoi", "characteristic": "volume", "lambda_values": [16.0, 25.0],
            "replications": 30, "guard": 8.0{extra}}}}}"#
    )
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let line = text.lines().last().unwrap();
    serde_json::from_str::<Value>(line).unwrap()["error"].clone()
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn experiment_writes_summary_replications_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, experiment("")).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["experiment", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["summary.json", "replications.csv", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(out_dir.join("replications.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "replication,lambda,kind,value,n_cells_included,n_cells_excluded_threshold,n_unbounded"
    );
    assert_eq!(lines.count(), 60);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["lambdas"].as_array().unwrap().len(), 2);
    assert!(summary["n_unbounded"].is_u64());
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "experiment",
        "--config",
        &experiment(", \"replications_typo\": 3"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["kind"], "parse");
    assert_eq!(e["field"], "experiment.replications_typo");
    assert!(dir.path().join("error.json").exists());

    let out = run(&["experiment", "--config", &experiment("").replace("16.0", "\"sixteen\"")]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["field"], "experiment.lambda_values[0]");

    let out = run(&["experiment", "--config", "{\"experiment\": "]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_values_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&["experiment", "--config", &experiment("").replace("\"replications\": 30", "\"replications\": 1"), "--out", d]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["kind"], "validation");

    let mut cfg: Value = serde_json::from_str(&experiment("")).unwrap();
    cfg["subcommand"] = "tails".into();
    let out = run(&["experiment", "--config", &cfg.to_string(), "--out", d]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["field"], "subcommand");

    let out = run(&["experiment", "--config", &experiment(""), "--out", d, "--threads", "0"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unstabilizable_sample_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"experiment": {"model": "laguerre", "characteristic": "volume",
        "mark_dist": {"uniform": {"a": 0, "b": 20}}, "lambda_values": [16.0], "replications": 20, "guard": 1.0}}"#;
    let out = run(&["experiment", "--config", cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["kind"], "not_stabilized");
}

#[test]
fn missing_config_and_bad_flags_are_parse_errors() {
    assert_eq!(run(&["experiment"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn manifest_rerun_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = experiment(", \"oracle_replications\": 50").replace("\"guard\": 8.0", "\"guard\": \"auto\"");
    let out = run(&["experiment", "--config", &cfg, "--out", a.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = a.join("manifest.json");
    let m: Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["config"]["experiment"]["master_seed"], 5);
    assert!(m["config"]["experiment"]["guard"].is_f64());
    assert_eq!(m["guard_resolution"]["auto"], true);
    let out = Command::new(BIN)
        .args(["experiment", "--config", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()])
        .env("TESSLAB_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let (ca, cb) = (csvs(&a), csvs(&b));
    assert_eq!(ca.len(), 3);
    assert_eq!(ca, cb);
}

#[test]
fn seed_changes_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&["sample", "--config", &experiment(""), "--out", a.to_str().unwrap(), "--seed", "1"]);
    run(&["sample", "--config", &experiment(""), "--out", b.to_str().unwrap(), "--seed", "2"]);
    assert_ne!(fs::read(a.join("points.csv")).unwrap(), fs::read(b.join("points.csv")).unwrap());
}

#[test]
fn tessellate_emits_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment("").replace("\"voronoi\"", "\"johnson_mehl\"").replace(
        "\"guard\": 8.0",
        "\"guard\": 8.0, \"kernel\": {\"raster\": {\"grid_h\": 0.1}}",
    );
    let out = run(&["tessellate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cells: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cells.json")).unwrap()).unwrap();
    let cells = cells.as_array().unwrap();
    let points = fs::read_to_string(dir.path().join("points.csv")).unwrap().lines().count() - 1;
    assert_eq!(cells.len(), points);
    // every window pixel belongs to exactly one raster cell
    let pixels: u64 = cells
        .iter()
        .filter(|c| c["geometry"]["shape"] == "raster")
        .map(|c| {
            let rle = c["geometry"]["rle"].as_array().unwrap();
            rle.iter().skip(1).step_by(2).map(|r| r.as_u64().unwrap()).sum::<u64>()
        })
        .sum();
    assert_eq!(pixels, 40 * 40);
}

#[test]
fn estimate_emits_ledger_that_sums_to_the_value() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&experiment("")).unwrap();
    cfg["emit_ledger"] = true.into();
    let out = run(&["estimate", "--config", &cfg.to_string(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let ledger = fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
    let sum: f64 = ledger
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((sum - summary["value"].as_f64().unwrap()).abs() < 1e-12);
}
