use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hdclt::AppError;
use serde_json::Value;
use tempfile::TempDir;

fn hdclt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdclt"))
        .args(args)
        .env_remove("HDCLT_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

const EXACT_RUN: &str = r#"{
  "experiment": "clt_rate",
  "spec": {"p": 1, "law": "rademacher", "model": "identity"},
  "n_grid": [4, 16, 64, 256],
  "family": {"kind": "all_corners"},
  "seed": 3,
  "output": {"csv": "series.csv", "json": "summary.json"}
}"#;

const MC_RUN: &str = r#"{
  "experiment": "clt_rate",
  "spec": {"p": 3, "law": "rademacher", "model": "equicorrelated", "model_params": {"rho": 0.3}},
  "n_grid": [8, 32],
  "budgets": {"mc": 30000},
  "seed": 5,
  "output": {"csv": "series.csv", "json": "summary.json"}
}"#;

fn write_config(dir: &TempDir, text: &str) -> String {
    let path = dir.path().join("config.json");
    fs::write(&path, text).unwrap();
    path_str(&path).to_owned()
}

fn write_csv(dir: &TempDir, name: &str, rows: &[Vec<f64>]) -> String {
    let text: String = rows
        .iter()
        .map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path_str(&path).to_owned()
}

#[test]
fn valid_run_writes_series_and_manifest() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, EXACT_RUN);
    let out = hdclt(&["run", "--config", &config]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["status"], "succeeded");
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["master_seed"], 3);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn out_flag_redirects_outputs_and_seed_flag_overrides() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, EXACT_RUN);
    let target = dir.path().join("elsewhere");
    let out = hdclt(&[
        "run",
        "--config",
        &config,
        "--out",
        path_str(&target),
        "--seed",
        "99",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(target.join("series.csv").exists());
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(target.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 99);
    assert!(!dir.path().join("series.csv").exists());
}

#[test]
fn malformed_config_reports_the_line() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "{\n  \"experiment\": \"clt_rate\",\n  \"spec\": {\n}");
    let out = hdclt(&["run", "--config", &config]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["status"], "failed");
    assert_eq!(manifest["exit_code"], 2);
}

#[test]
fn empty_n_grid_is_rejected_by_name() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &EXACT_RUN.replace("[4, 16, 64, 256]", "[]"));
    let out = hdclt(&["run", "--config", &config]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("n_grid"), "{}", stderr(&out));
}

#[test]
fn missing_config_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    let out = hdclt(&["run", "--config", path_str(&missing)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let out = hdclt(&["check", "--suite", "astrology"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("astrology"));
}

#[test]
fn smoothing_suite_reports_its_checks() {
    let out = hdclt(&["check", "--suite", "smoothing"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = stdout_json(&out);
    assert_eq!(report["pass"], true);
    let ids: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["id"].as_str().unwrap())
        .collect();
    for want in ["finite_difference", "dilation", "far_field"] {
        assert!(
            ids.iter()
                .any(|id| id.starts_with(&format!("smoothing.{want}"))),
            "{want} missing from {ids:?}"
        );
    }
}

#[test]
fn check_report_can_go_to_a_file() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("report.json");
    let out = hdclt(&["check", "--suite", "geometry", "--out", path_str(&path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report["suite"], "geometry");
}

#[test]
fn zero_data_gives_zero_width_and_no_rejection() {
    let dir = TempDir::new().unwrap();
    let data = write_csv(&dir, "zeros.csv", &vec![vec![0.0; 3]; 10]);
    let out = hdclt(&["infer", "--data", &data, "--B", "200"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = stdout_json(&out);
    assert_eq!(report["half_width"], 0.0);
    assert_eq!(report["reject"], false);
    assert_eq!(report["centers"], serde_json::json!([0.0, 0.0, 0.0]));
}

#[test]
fn infer_is_reproducible_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()])
        .collect();
    let data = write_csv(&dir, "data.csv", &rows);
    for method in ["empirical", "multiplier"] {
        let a = hdclt(&[
            "infer", "--data", &data, "--method", method, "--B", "500", "--seed", "4",
        ]);
        let b = hdclt(&[
            "infer", "--data", &data, "--method", method, "--B", "500", "--seed", "4",
        ]);
        assert_eq!(code(&a), 0, "{}", stderr(&a));
        assert_eq!(a.stdout, b.stdout);
        assert_eq!(stdout_json(&a)["method"], method);
    }
}

#[test]
fn infer_rejects_tiny_or_missing_data() {
    let dir = TempDir::new().unwrap();
    let one = write_csv(&dir, "one.csv", &[vec![1.0, 2.0]]);
    assert_eq!(code(&hdclt(&["infer", "--data", &one])), 2);
    let missing = dir.path().join("absent.csv");
    assert_eq!(code(&hdclt(&["infer", "--data", path_str(&missing)])), 2);
}

#[test]
fn scalar_gaussian_width_matches_the_normal_quantile() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"p": 1, "law": "standard_normal", "model": "identity"}"#,
    )
    .unwrap();
    let data = dir.path().join("x.csv");
    let out = hdclt(&[
        "sample",
        "--spec",
        path_str(&spec),
        "--n",
        "10000",
        "--seed",
        "8",
        "--out",
        path_str(&data),
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let xs: Vec<f64> = fs::read_to_string(&data)
        .unwrap()
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect();
    assert_eq!(xs.len(), 10_000);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    let out = hdclt(&[
        "infer",
        "--data",
        path_str(&data),
        "--B",
        "20000",
        "--seed",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let width = stdout_json(&out)["half_width"].as_f64().unwrap();
    let expected = 1.644_853_626_951_472_2 * sd / 100.0;
    assert!(
        (width / expected - 1.0).abs() < 0.03,
        "width {width} vs {expected}"
    );
}

#[test]
fn sample_and_boot_persist_their_outputs() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"p": 4, "law": "rademacher", "model": "ar1", "model_params": {"phi": 0.5}}"#,
    )
    .unwrap();
    let bin = dir.path().join("x.bin");
    let out = hdclt(&[
        "sample",
        "--spec",
        path_str(&spec),
        "--n",
        "50",
        "--out",
        path_str(&bin),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let x = hdclt::io::read_sample(&bin).unwrap();
    assert_eq!((x.n(), x.p()), (50, 4));

    let again = dir.path().join("y.bin");
    hdclt(&[
        "sample",
        "--spec",
        path_str(&spec),
        "--n",
        "50",
        "--out",
        path_str(&again),
    ]);
    assert_eq!(fs::read(&bin).unwrap(), fs::read(&again).unwrap());

    let summary = dir.path().join("nested/boot.json");
    let out = hdclt(&[
        "boot",
        "--data",
        path_str(&bin),
        "--B",
        "300",
        "--method",
        "empirical",
        "--out",
        path_str(&summary),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let saved: Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(saved["q_hat"], stdout_json(&out)["q_hat"]);
}

#[test]
fn sample_rejects_a_bad_spec() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"p": 2, "law": "rademacher", "model": "equicorrelated"}"#,
    )
    .unwrap();
    let out = hdclt(&[
        "sample",
        "--spec",
        path_str(&spec),
        "--n",
        "5",
        "--out",
        path_str(&dir.path().join("x.bin")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, MC_RUN);
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let target = dir.path().join(format!("t{threads}"));
        let out = hdclt(&[
            "--threads",
            threads,
            "run",
            "--config",
            &config,
            "--out",
            path_str(&target),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        outputs.push((
            fs::read(target.join("series.csv")).unwrap(),
            fs::read(target.join("summary.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn error_kinds_map_to_exit_codes() {
    assert_eq!(AppError::validation("x").exit_code(), 2);
    assert_eq!(
        AppError::io("f", std::io::Error::other("gone")).exit_code(),
        2
    );
    let numerical: AppError = hdclt_core::Error::invalid("budget", "0").into();
    assert_eq!(numerical.exit_code(), 3);
}
