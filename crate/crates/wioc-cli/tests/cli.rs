//! End-to-end checks of the `wioc` binary and the harness file formats:
//! stage-wise commands, exit codes, schema parse-backs, and the failure path.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use wioc_cli::config::ExperimentConfig;
use wioc_cli::report::MetricsReport;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_wioc")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wioc_cli_{name}"));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn toy_config(dir: &Path) -> PathBuf {
    // Three-trajectory toy; KL-mode demos with a mismatched resample count so
    // the matched-count eval path is exercised too.
    let text = format!(
        r#"
schema_version = 1

[experiment]
method = "kl"
seeds = [0, 1]
out_dir = "{}"
gamma = 1.0

[env]
kind = "gaussian_walk"
k = 2
n = 3

[truth]
theta = [0.5, -0.5]
demo_mode = "kl"
n_resample = 5

[fit]
iterations = 20
"#,
        dir.join("out").display()
    );
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn report_smoke_run_validates_against_the_schema() {
    let dir = scratch("report");
    let config = toy_config(&dir);
    let status = Command::new(bin())
        .args(["report", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());

    // Typed parse-back with deny_unknown_fields is the schema check.
    let text = fs::read_to_string(dir.join("out/report.json")).unwrap();
    let report: MetricsReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.schema_version, 1);
    assert_eq!(report.method, "kl");
    assert_eq!(report.per_seed.len(), 2);
    assert!(report.failure.is_none());
    assert!(report.averages.w1.is_some());

    // Averages equal the arithmetic mean of the per-seed entries.
    let mean: f64 = report.per_seed.iter().map(|m| m.w1.unwrap()).sum::<f64>()
        / report.per_seed.len() as f64;
    assert!((report.averages.w1.unwrap() - mean).abs() <= 1e-12);

    // Tidy metrics CSV has the declared header and parses back.
    let csv = fs::read_to_string(dir.join("out/metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "method,p,metric,seed,value");
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 5);
        fields[3].parse::<u64>().unwrap();
        fields[4].parse::<f64>().unwrap();
    }
}

#[test]
fn stagewise_commands_compose() {
    let dir = scratch("stages");
    let config = toy_config(&dir);
    for stage in ["simulate", "fit", "eval"] {
        let status = Command::new(bin())
            .args([stage, "--config"])
            .arg(&config)
            .status()
            .unwrap();
        assert!(status.success(), "stage {stage} failed");
    }
    assert!(dir.join("out/data/seed0/baseline.csv").exists());
    assert!(dir.join("out/data/seed0/demos.csv").exists());
    assert!(dir.join("out/data/seed0/meta.json").exists());
    assert!(dir.join("out/fit/seed0/kl/checkpoint.json").exists());
    assert!(dir.join("out/fit/seed0/kl/train_log.jsonl").exists());
    assert!(dir.join("out/eval/seed0/kl/metrics.json").exists());

    // Every training-log line carries the documented fields.
    let log = fs::read_to_string(dir.join("out/fit/seed0/kl/train_log.jsonl")).unwrap();
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for field in ["epoch", "nll", "grad_norm", "theta_snapshot_path"] {
            assert!(v.get(field).is_some(), "missing {field} in {line}");
        }
    }

    // Same pipeline with the adversarial method; its log has its own schema.
    let status = Command::new(bin())
        .args(["fit", "--config"])
        .arg(&config)
        .args(["--method", "w"])
        .status()
        .unwrap();
    assert!(status.success());
    let log = fs::read_to_string(dir.join("out/fit/seed0/w/train_log.jsonl")).unwrap();
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for field in [
            "iter",
            "dual_estimate",
            "w1_exact",
            "theta_grad_norm",
            "transport_refresh",
        ] {
            assert!(v.get(field).is_some(), "missing {field} in {line}");
        }
    }
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = scratch("badcfg");
    let path = dir.join("bad.toml");
    fs::write(&path, "schema_version = 1\n").unwrap();
    let status = Command::new(bin())
        .args(["report", "--config"])
        .arg(&path)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // train_p outside the allowed set is also a config error.
    let config = toy_config(&dir);
    let text = fs::read_to_string(&config)
        .unwrap()
        .replace("gamma = 1.0", "gamma = 1.0\ntrain_p = 0.75");
    fs::write(&config, text).unwrap();
    let status = Command::new(bin())
        .args(["report", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn numeric_failures_exit_with_code_3_and_record_the_failure() {
    let dir = scratch("numfail");
    // Supercritical Hawkes parameters fail at the simulate stage.
    let text = format!(
        r#"
schema_version = 1

[experiment]
method = "kl"
seeds = [0]
out_dir = "{}"

[env]
kind = "hawkes_events"
k = 3
n = 2
horizon = 10.0
mu0 = 1.0
alpha = 2.0
beta = 1.0

[truth]
theta = [0.0, 0.0, 0.0]
"#,
        dir.join("out").display()
    );
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    let status = Command::new(bin())
        .args(["report", "--config"])
        .arg(&path)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));

    // Partial artifacts are retained and the report records the failure.
    let text = fs::read_to_string(dir.join("out/report.json")).unwrap();
    let report: MetricsReport = serde_json::from_str(&text).unwrap();
    assert!(report.failure.as_deref().unwrap().contains("seed 0"));
}

#[test]
fn env_overrides_replace_seed_and_out_dir() {
    let dir = scratch("envvars");
    let config = toy_config(&dir);
    let out2 = dir.join("alt_out");
    let status = Command::new(bin())
        .args(["report", "--config"])
        .arg(&config)
        .env("WIOC_SEED", "9")
        .env("WIOC_OUT", &out2)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(out2.join("report.json")).unwrap();
    let report: MetricsReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.per_seed.len(), 1);
    assert_eq!(report.per_seed[0].seed, 9);
}

#[test]
fn single_method_compare_produces_one_row_per_p() {
    let dir = scratch("compare1");
    let text = format!(
        r#"
schema_version = 1

[experiment]
method = "bc"
seeds = [0]
out_dir = "{}"
gamma = 0.7

[env]
kind = "recommender"
k = 2
n_users = 3
n_items = 8
events_per_user = 10

[fit]
iterations = 30
minibatch = 16

[compare]
methods = ["bc"]
train_p = [0.5, 0.8]
"#,
        dir.join("out").display()
    );
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    let status = Command::new(bin())
        .args(["compare", "--config"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());

    let csv = fs::read_to_string(dir.join("out/compare.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,p,top1,top5,w1,theta_err,seconds");
    // One bc row per p plus one oracle row per p.
    let bc_rows = lines[1..].iter().filter(|l| l.starts_with("bc,")).count();
    let oracle_rows = lines[1..].iter().filter(|l| l.starts_with("oracle,")).count();
    assert_eq!(bc_rows, 2);
    assert_eq!(oracle_rows, 2);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 7);
        fields[1].parse::<f64>().unwrap();
        fields[2].parse::<f64>().unwrap(); // top1 present on the recommender
    }

    // The method/eval config echo parses back as a valid config.
    let echo = fs::read_to_string(dir.join("out/compare/bc_p50/report.json")).unwrap();
    let report: MetricsReport = serde_json::from_str(&echo).unwrap();
    report.config.validate().unwrap();
    let _: ExperimentConfig = report.config;
}
