use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn grtr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grtr")).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const FAST_FINANCE: &[&str] = &["finance", "--fixture", "--rank", "1,2", "--lambda", "0,3", "--max-steps", "200"];

#[test]
fn synthetic_reports_are_byte_identical() {
    let args = ["synthetic", "--seed", "7", "--models", "grtr", "--max-steps", "100"];
    let (a, b) = (grtr(&args), grtr(&args));
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let report: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(report["models"].as_array().unwrap().len(), 1);
    assert_eq!(report["models"][0]["name"], "grtr");
    assert_eq!(report["runs"][0]["seed"], 7);
}

#[test]
fn synthetic_seeds_report_medians_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("syn.json");
    let traces = dir.path().join("traces");
    let out = grtr(&[
        "synthetic",
        "--seeds",
        "2",
        "--max-steps",
        "40",
        "--output",
        report_path.to_str().unwrap(),
        "--trace-dir",
        traces.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let report = json(&report_path);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["experiment"], "synthetic");
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    let names: Vec<&str> = report["models"].as_array().unwrap().iter().map(|m| m["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["lr", "l2lr", "tr", "l2tr", "grtr"]);
    for m in report["models"].as_array().unwrap() {
        assert!(m["weight_mse"].as_f64().unwrap() >= 0.0);
        assert!(m.get("wall_seconds").is_none());
    }
    assert_eq!(report["models"][4]["params"], 200);
    assert_eq!(report["models"][0]["params"], 10_000);
    let trace = std::fs::read_to_string(traces.join("grtr_seed1.csv")).unwrap();
    assert_eq!(trace.lines().count(), 41);
}

#[test]
fn finance_fixture_writes_report_model_and_graph() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("fin.json");
    let graphs = dir.path().join("graphs");
    let mut args = FAST_FINANCE.to_vec();
    args.extend(["--output", report_path.to_str().unwrap(), "--graph-dir", graphs.to_str().unwrap()]);
    let out = grtr(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = json(&report_path);
    assert_eq!(report["experiment"], "finance");
    assert_eq!(report["data"]["windows"], 494);
    for m in report["models"].as_array().unwrap() {
        for split in ["train", "validation", "test"] {
            let acc = m[split]["raw"]["directional_accuracy"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&acc));
        }
    }
    assert!(dir.path().join("fin.model.json").exists());
    let laplacian = std::fs::read_to_string(graphs.join("sector_laplacian.csv")).unwrap();
    assert_eq!(laplacian.lines().count(), 20);
}

#[test]
fn missing_sectors_file_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices.csv");
    std::fs::write(&prices, "date,ticker,adj_close,close,high,low,open,volume\n").unwrap();
    let report_path = dir.path().join("out/report.json");
    let out = grtr(&[
        "finance",
        "--prices",
        prices.to_str().unwrap(),
        "--sectors",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--output",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("absent.csv"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(grtr(&["finance", "--prices", "p.csv"]).status.code(), Some(2));
    assert_eq!(grtr(&["finance"]).status.code(), Some(2));
    let out = grtr(&["synthetic", "--models", "svm"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("svm"));
}

#[test]
fn gradcheck_passes_and_detects_corruption() {
    let ok = grtr(&["gradcheck"]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("50 of 50 trials passed"));
    let bad = grtr(&["gradcheck", "--trials", "5", "--corrupt", "0.01"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn inspect_reports_factors_coefficients_and_breakdown() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let mut args = FAST_FINANCE.to_vec();
    args.extend(["--models", "grtr", "--model-output", model.to_str().unwrap()]);
    let out = grtr(&args);
    assert!(out.status.success(), "{}", stderr(&out));

    let input = dir.path().join("x.json");
    let data: Vec<f64> = (0..600).map(|i| ((i * 37) % 11) as f64 / 5.0 - 1.0).collect();
    std::fs::write(&input, serde_json::json!({"shape": [5, 20, 6], "data": data}).to_string()).unwrap();
    let factors = dir.path().join("factors");
    let summary = dir.path().join("summary.json");
    let out = grtr(&[
        "inspect",
        "--model",
        model.to_str().unwrap(),
        "--coef",
        "1,10,2",
        "--coef",
        "5,20,6",
        "--factors-dir",
        factors.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--output",
        summary.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    for (mode, rows) in [(1, 5), (2, 20), (3, 6)] {
        let csv = std::fs::read_to_string(factors.join(format!("factor_mode{mode}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), rows + 1);
        assert!(csv.starts_with("index,r1"));
    }
    let report = json(&summary);
    assert_eq!(report["shape"], serde_json::json!([5, 20, 6]));
    let coefs = report["coefficients"].as_array().unwrap();
    assert_eq!(coefs[0]["index"], serde_json::json!([1, 10, 2]));
    assert!(coefs[1]["value"].is_f64());

    let breakdown = &report["breakdown"];
    let total: f64 = breakdown["ranks"].as_array().unwrap().iter().map(|r| r["contribution"].as_f64().unwrap()).sum::<f64>()
        + breakdown["bias"].as_f64().unwrap();
    let prediction = breakdown["prediction"].as_f64().unwrap();
    assert!((total - prediction).abs() <= 1e-10 * prediction.abs().max(1.0));

    assert_eq!(grtr(&["inspect", "--model", model.to_str().unwrap(), "--coef", "0,1,1"]).status.code(), Some(2));
    assert_eq!(grtr(&["inspect", "--model", model.to_str().unwrap(), "--coef", "6,1,1"]).status.code(), Some(2));
}

#[test]
fn command_line_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"seeds": 2, "rank": 3, "max_steps": 20, "models": ["tr"]}"#).unwrap();
    let out = grtr(&["synthetic", "--config", config.to_str().unwrap(), "--rank", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["config"]["rank"], 2);
    assert_eq!(report["config"]["seeds"], 2);
    assert_eq!(report["config"]["max_steps"], 20);
    assert_eq!(report["models"].as_array().unwrap().len(), 1);

    std::fs::write(&config, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(grtr(&["synthetic", "--config", config.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn help_documents_flags() {
    let out = grtr(&["finance", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--fixture", "--prices", "--sectors", "--window", "--beta", "--rank", "--lambda", "--tol", "--trace-dir", "--config"] {
        assert!(text.contains(flag), "missing {flag}");
    }
    let out = grtr(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["synthetic", "finance", "gradcheck", "inspect"] {
        assert!(text.contains(sub));
    }
}
