//! Report aggregation and the machine-readable output files.
//!
//! `report.json` and `metrics.csv` are byte-reproducible under identical
//! configs; wall-clock numbers live in `timing.csv` and the `seconds` column
//! of `compare.csv`, which are excluded from that guarantee.

use std::fmt::Write as _;
use std::fs;

use serde::{Deserialize, Serialize};
use wioc::error::Result;
use wioc::numeric::pairwise_sum;

use crate::config::{EnvKind, ExperimentConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SeedMetrics {
    pub seed: u64,
    pub top1: Option<f64>,
    pub top5: Option<f64>,
    pub w1: Option<f64>,
    pub theta_err: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AverageMetrics {
    pub top1: Option<f64>,
    pub top5: Option<f64>,
    pub w1: Option<f64>,
    pub theta_err: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub method: String,
    pub config: ExperimentConfig,
    pub per_seed: Vec<SeedMetrics>,
    pub averages: AverageMetrics,
    pub failure: Option<String>,
}

fn mean_of(values: &[Option<f64>]) -> Option<f64> {
    let collected: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if collected.is_empty() || collected.len() != values.len() {
        None
    } else {
        Some(pairwise_sum(&collected) / collected.len() as f64)
    }
}

impl MetricsReport {
    pub fn aggregate(
        config: &ExperimentConfig,
        per_seed: Vec<SeedMetrics>,
        failure: Option<String>,
    ) -> MetricsReport {
        let averages = AverageMetrics {
            top1: mean_of(&per_seed.iter().map(|m| m.top1).collect::<Vec<_>>()),
            top5: mean_of(&per_seed.iter().map(|m| m.top5).collect::<Vec<_>>()),
            w1: mean_of(&per_seed.iter().map(|m| m.w1).collect::<Vec<_>>()),
            theta_err: mean_of(&per_seed.iter().map(|m| m.theta_err).collect::<Vec<_>>()),
        };
        MetricsReport {
            schema_version: REPORT_SCHEMA_VERSION,
            method: config.experiment.method.name().to_string(),
            config: config.clone(),
            per_seed,
            averages,
            failure,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: String,
    pub p: f64,
    pub top1: Option<f64>,
    pub top5: Option<f64>,
    pub w1: Option<f64>,
    pub theta_err: Option<f64>,
    pub seconds: f64,
}

fn csv_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

fn p_label(config: &ExperimentConfig) -> String {
    match config.env.kind {
        EnvKind::Recommender => format!("{}", config.experiment.train_p),
        _ => "na".to_string(),
    }
}

/// Tidy long-format CSV: `method,p,metric,seed,value`.
pub fn write_metrics_csv(config: &ExperimentConfig, report: &MetricsReport) -> Result<()> {
    let mut out = String::from("method,p,metric,seed,value\n");
    let p = p_label(config);
    for m in &report.per_seed {
        for (name, value) in [
            ("top1", m.top1),
            ("top5", m.top5),
            ("w1", m.w1),
            ("theta_err", m.theta_err),
        ] {
            if let Some(v) = value {
                writeln!(out, "{},{},{},{},{}", report.method, p, name, m.seed, v).unwrap();
            }
        }
    }
    fs::write(config.experiment.out_dir.join("metrics.csv"), out)?;
    Ok(())
}

/// Wall-clock seconds per seed; deliberately outside the reproducible set.
pub fn write_timing_csv(config: &ExperimentConfig, timings: &[(u64, f64)]) -> Result<()> {
    let mut out = String::from("method,seed,seconds\n");
    for (seed, secs) in timings {
        writeln!(out, "{},{},{:.6}", config.experiment.method.name(), seed, secs).unwrap();
    }
    fs::write(config.experiment.out_dir.join("timing.csv"), out)?;
    Ok(())
}

/// One row per method and train proportion: `method,p,top1,top5,w1,theta_err,seconds`.
pub fn write_compare_csv(config: &ExperimentConfig, rows: &[CompareRow]) -> Result<()> {
    let mut out = String::from("method,p,top1,top5,w1,theta_err,seconds\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6}",
            r.method,
            r.p,
            csv_opt(r.top1),
            csv_opt(r.top5),
            csv_opt(r.w1),
            csv_opt(r.theta_err),
            r.seconds
        )
        .unwrap();
    }
    fs::write(config.experiment.out_dir.join("compare.csv"), out)?;
    Ok(())
}
