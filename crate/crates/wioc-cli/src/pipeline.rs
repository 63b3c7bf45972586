//! The experiment pipeline: simulate -> fit -> eval, per seed, plus the
//! method-comparison driver.
//!
//! Every stage is deterministic under `(config, seed)`: random streams are
//! derived from the seed with fixed stage constants, all reductions are
//! ordered, and all artifacts serialize with stable field order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use wioc::adversarial::{fit_joint, fit_policy_direct, fit_w, ExtRecord, ExtTrainOptions, WIterRecord, WTrainOptions};
use wioc::bc::{bc_fit, bc_samples, bc_score, BcOptions, BcRecord, ClonePolicy};
use wioc::checkpoint::Checkpoint;
use wioc::cost::CostModel;
use wioc::envs::{
    make_demonstrations, recommender_task, resample_indices, sample_gaussian_walk, sample_hawkes,
    score_items_by_cost, DemoMeta, DemoOptions, HawkesSpec, RecommenderSpec,
    RecommenderTask, WalkSpec,
};
use wioc::error::{Error, Result};
use wioc::kl::{fit_kl, EpochRecord, KlFitOptions};
use wioc::numeric::{norm, pairwise_sum};
use wioc::ranking::{top_k_rate, RankingOutcome};
use wioc::rng::{stream_rng, stream_seed};
use wioc::traj::EmpiricalMeasure;
use wioc::transport::{optimal_measure, ControlDistance, TransportOptions};
use wioc::w1::exact_w1;

use crate::config::{EnvKind, ExperimentConfig, Method};
use crate::report::{write_compare_csv, write_metrics_csv, write_timing_csv, CompareRow, MetricsReport, SeedMetrics};

// Stage constants for per-seed stream derivation.
const STAGE_ENV: u64 = 101;
const STAGE_DEMO: u64 = 102;
const STAGE_FIT: u64 = 103;
const STAGE_EVAL: u64 = 105;

/// Simulated data for one seed.
#[derive(Debug, Clone)]
pub enum SeedData {
    Recovery {
        baseline: EmpiricalMeasure,
        demos: EmpiricalMeasure,
        meta: DemoMeta,
    },
    Recommender { task: RecommenderTask },
}

/// Fitted artifacts for one seed.
#[derive(Debug, Clone)]
pub enum Fitted {
    Cost(CostModel),
    Policy(ClonePolicy),
    RecommenderCost(Vec<CostModel>),
    RecommenderPolicy(Vec<ClonePolicy>),
}

/// Training log lines, one variant per framework.
#[derive(Debug, Clone)]
pub enum TrainLog {
    Kl(Vec<EpochRecord>),
    W(Vec<WIterRecord>),
    Bc(Vec<BcRecord>),
    Ext(Vec<ExtRecord>),
}

impl TrainLog {
    fn to_jsonl(&self) -> Result<String> {
        fn lines<T: Serialize>(records: &[T]) -> Result<String> {
            let mut out = String::new();
            for r in records {
                out.push_str(&serde_json::to_string(r)?);
                out.push('\n');
            }
            Ok(out)
        }
        match self {
            TrainLog::Kl(records) => lines(records),
            TrainLog::W(records) => lines(records),
            TrainLog::Bc(records) => lines(records),
            TrainLog::Ext(records) => lines(records),
        }
    }
}

pub struct FitOutput {
    pub fitted: Fitted,
    /// One log for recovery runs; one per user for the recommender.
    pub logs: Vec<TrainLog>,
}

fn transport_options(config: &ExperimentConfig) -> TransportOptions {
    let distance = match config.fit.transport_distance {
        crate::config::TransportDistance::Smoothed => ControlDistance::Smoothed {
            eps: config.fit.transport_eps,
        },
        crate::config::TransportDistance::Squared => ControlDistance::Squared,
    };
    TransportOptions {
        distance,
        grad_tol: config.fit.grad_tol,
        workers: config.fit.workers,
        ..TransportOptions::default()
    }
}

/// Sidecar metadata written next to generated measures.
#[derive(Debug, Serialize, Deserialize)]
struct SimMeta {
    schema_version: u32,
    env: crate::config::EnvSection,
    seed: u64,
    gamma: f64,
    demo: DemoMeta,
}

pub fn simulate_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedData> {
    let env_seed = stream_seed(seed, STAGE_ENV);
    match config.env.kind {
        EnvKind::GaussianWalk | EnvKind::HawkesEvents => {
            let baseline = match config.env.kind {
                EnvKind::GaussianWalk => sample_gaussian_walk(&WalkSpec {
                    k: config.env.k,
                    n: config.env.n,
                    seed: env_seed,
                })?,
                _ => sample_hawkes(&HawkesSpec {
                    k: config.env.k,
                    n: config.env.n,
                    horizon: config.env.horizon,
                    mu0: config.env.mu0,
                    alpha: config.env.alpha,
                    beta: config.env.beta,
                    seed: env_seed,
                })?,
            };
            let truth = config
                .truth
                .as_ref()
                .ok_or_else(|| Error::Config("missing [truth] section".into()))?;
            let model = CostModel::quadratic(truth.theta.clone())?;
            let (demos, meta) = make_demonstrations(
                &model,
                &baseline,
                config.experiment.gamma,
                truth.demo_mode,
                &DemoOptions {
                    n_resample: truth.n_resample,
                    seed: stream_seed(seed, STAGE_DEMO),
                    transport: transport_options(config),
                },
            )?;
            Ok(SeedData::Recovery {
                baseline,
                demos,
                meta,
            })
        }
        EnvKind::Recommender => {
            let task = recommender_task(&RecommenderSpec {
                n_users: config.env.n_users,
                n_items: config.env.n_items,
                k: config.env.k,
                events_per_user: config.env.events_per_user,
                gamma: config.env.choice_gamma,
                theta_scale: config.env.theta_scale,
                train_p: config.experiment.train_p,
                seed: env_seed,
            })?;
            Ok(SeedData::Recommender { task })
        }
    }
}

pub fn data_dir(config: &ExperimentConfig, seed: u64) -> PathBuf {
    config.experiment.out_dir.join(format!("data/seed{seed}"))
}

pub fn fit_dir(config: &ExperimentConfig, seed: u64) -> PathBuf {
    config
        .experiment
        .out_dir
        .join(format!("fit/seed{seed}/{}", config.experiment.method.name()))
}

pub fn eval_dir(config: &ExperimentConfig, seed: u64) -> PathBuf {
    config
        .experiment
        .out_dir
        .join(format!("eval/seed{seed}/{}", config.experiment.method.name()))
}

/// Per-user view of a recommender task serialized into `users.json`.
#[derive(Debug, Serialize, Deserialize)]
struct UserRecord {
    theta_true: Vec<f64>,
    train_events: Vec<usize>,
    test_events: Vec<usize>,
}

pub fn write_sim_artifacts(config: &ExperimentConfig, seed: u64, data: &SeedData) -> Result<()> {
    let dir = data_dir(config, seed);
    fs::create_dir_all(&dir)?;
    match data {
        SeedData::Recovery {
            baseline,
            demos,
            meta,
        } => {
            baseline.write_csv(&dir.join("baseline.csv"))?;
            demos.write_csv(&dir.join("demos.csv"))?;
            let sidecar = SimMeta {
                schema_version: 1,
                env: config.env.clone(),
                seed,
                gamma: config.experiment.gamma,
                demo: meta.clone(),
            };
            fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&sidecar)?)?;
        }
        SeedData::Recommender { task } => {
            task.item_measure.write_csv(&dir.join("items.csv"))?;
            let users: Vec<UserRecord> = task
                .users
                .iter()
                .map(|u| UserRecord {
                    theta_true: u.theta_true.clone(),
                    train_events: u.train_events.clone(),
                    test_events: u.test_events.clone(),
                })
                .collect();
            fs::write(dir.join("users.json"), serde_json::to_string_pretty(&users)?)?;
        }
    }
    Ok(())
}

fn fit_one(
    config: &ExperimentConfig,
    fit_seed_value: u64,
    demos: &EmpiricalMeasure,
    baseline: &EmpiricalMeasure,
) -> Result<(FittedSingle, TrainLog)> {
    let k = baseline.dim();
    let gamma = config.experiment.gamma;
    let fit = &config.fit;
    match config.experiment.method {
        Method::Kl | Method::Maxent => {
            let init = CostModel::quadratic(vec![0.0; k])?;
            let opts = KlFitOptions {
                step_size: fit.step_size,
                epochs: fit.iterations,
                minibatch: fit.minibatch,
                uniform_baseline: config.experiment.method == Method::Maxent,
                seed: fit_seed_value,
            };
            let (model, log) = fit_kl(&init, demos, baseline, gamma, &opts)?;
            Ok((FittedSingle::Cost(model), TrainLog::Kl(log)))
        }
        Method::W => {
            let init = CostModel::quadratic(vec![0.0; k])?;
            let opts = WTrainOptions {
                n_critic: fit.n_critic,
                critic_lr: fit.critic_lr,
                theta_lr: fit.step_size,
                minibatch: fit.minibatch,
                iterations: fit.iterations,
                refresh_every: fit.refresh_every,
                seed: fit_seed_value,
                transport: transport_options(config),
                critic_hidden: fit.hidden,
                clip_bound: fit.clip_bound,
                w1_diag_every: if fit.w1_diag_every > 0 {
                    Some(fit.w1_diag_every)
                } else {
                    None
                },
            };
            let (model, _, log) = fit_w(&init, demos, baseline, gamma, &opts)?;
            Ok((FittedSingle::Cost(model), TrainLog::W(log)))
        }
        Method::Bc => {
            let opts = BcOptions {
                steps: fit.iterations,
                minibatch: fit.minibatch,
                step_size: fit.step_size,
                hidden: fit.hidden,
                seed: fit_seed_value,
            };
            let (policy, log) = bc_fit(demos, fit.noise_dim, &opts)?;
            Ok((FittedSingle::Policy(policy), TrainLog::Bc(log)))
        }
        Method::PolicyDirect => {
            let opts = ext_options(config, fit_seed_value);
            let (generator, log) =
                fit_policy_direct(demos, baseline, config.experiment.lambda, &opts)?;
            Ok((
                FittedSingle::Policy(ClonePolicy::from_generator(generator)),
                TrainLog::Ext(log),
            ))
        }
        Method::Joint => {
            let init = CostModel::quadratic(vec![0.0; k])?;
            let opts = ext_options(config, fit_seed_value);
            let (model, _, log) = fit_joint(
                &init,
                demos,
                baseline,
                gamma,
                config.experiment.lambda,
                &opts,
            )?;
            Ok((FittedSingle::Cost(model), TrainLog::Ext(log)))
        }
    }
}

fn ext_options(config: &ExperimentConfig, seed: u64) -> ExtTrainOptions {
    let fit = &config.fit;
    ExtTrainOptions {
        iterations: fit.iterations,
        n_critic: fit.n_critic,
        critic_lr: fit.critic_lr,
        gen_lr: fit.step_size,
        theta_lr: fit.step_size,
        minibatch: fit.minibatch,
        noise_dim: fit.noise_dim,
        sample_count: fit.minibatch,
        seed,
        clip_bound: fit.clip_bound,
        hidden: fit.hidden,
        transport: transport_options(config),
    }
}

enum FittedSingle {
    Cost(CostModel),
    Policy(ClonePolicy),
}

pub fn fit_seed(config: &ExperimentConfig, seed: u64, data: &SeedData) -> Result<FitOutput> {
    let fit_master = stream_seed(seed, STAGE_FIT);
    match data {
        SeedData::Recovery {
            baseline, demos, ..
        } => {
            let (single, log) = fit_one(config, fit_master, demos, baseline)?;
            let fitted = match single {
                FittedSingle::Cost(m) => Fitted::Cost(m),
                FittedSingle::Policy(p) => Fitted::Policy(p),
            };
            Ok(FitOutput {
                fitted,
                logs: vec![log],
            })
        }
        SeedData::Recommender { task } => {
            let mut models = Vec::new();
            let mut policies = Vec::new();
            let mut logs = Vec::new();
            for (u, user) in task.users.iter().enumerate() {
                let user_seed = stream_seed(fit_master, u as u64);
                let (single, log) =
                    fit_one(config, user_seed, &user.demos, &task.item_measure)?;
                match single {
                    FittedSingle::Cost(m) => models.push(m),
                    FittedSingle::Policy(p) => policies.push(p),
                }
                logs.push(log);
            }
            let fitted = if policies.is_empty() {
                Fitted::RecommenderCost(models)
            } else {
                Fitted::RecommenderPolicy(policies)
            };
            Ok(FitOutput { fitted, logs })
        }
    }
}

pub fn write_fit_artifacts(
    config: &ExperimentConfig,
    seed: u64,
    output: &FitOutput,
) -> Result<()> {
    let dir = fit_dir(config, seed);
    fs::create_dir_all(&dir)?;
    match &output.fitted {
        Fitted::Cost(model) => {
            Checkpoint::of_cost_model(model).save(&dir.join("checkpoint.json"))?;
            fs::write(dir.join("train_log.jsonl"), output.logs[0].to_jsonl()?)?;
        }
        Fitted::Policy(policy) => {
            Checkpoint::of_clone_policy(policy).save(&dir.join("checkpoint.json"))?;
            fs::write(dir.join("train_log.jsonl"), output.logs[0].to_jsonl()?)?;
        }
        Fitted::RecommenderCost(models) => {
            for (u, model) in models.iter().enumerate() {
                let udir = dir.join(format!("user{u:03}"));
                fs::create_dir_all(&udir)?;
                Checkpoint::of_cost_model(model).save(&udir.join("checkpoint.json"))?;
                fs::write(udir.join("train_log.jsonl"), output.logs[u].to_jsonl()?)?;
            }
        }
        Fitted::RecommenderPolicy(policies) => {
            for (u, policy) in policies.iter().enumerate() {
                let udir = dir.join(format!("user{u:03}"));
                fs::create_dir_all(&udir)?;
                Checkpoint::of_clone_policy(policy).save(&udir.join("checkpoint.json"))?;
                fs::write(udir.join("train_log.jsonl"), output.logs[u].to_jsonl()?)?;
            }
        }
    }
    Ok(())
}

/// Loads fitted artifacts written by [`write_fit_artifacts`].
pub fn load_fitted(config: &ExperimentConfig, seed: u64, data: &SeedData) -> Result<Fitted> {
    let dir = fit_dir(config, seed);
    let load_single = |path: &Path| -> Result<FittedSingle> {
        let ck = Checkpoint::load(path)?;
        if ck.family == "clone_policy" {
            Ok(FittedSingle::Policy(ck.to_clone_policy()?))
        } else {
            Ok(FittedSingle::Cost(ck.to_cost_model()?))
        }
    };
    match data {
        SeedData::Recovery { .. } => match load_single(&dir.join("checkpoint.json"))? {
            FittedSingle::Cost(m) => Ok(Fitted::Cost(m)),
            FittedSingle::Policy(p) => Ok(Fitted::Policy(p)),
        },
        SeedData::Recommender { task } => {
            let mut models = Vec::new();
            let mut policies = Vec::new();
            for u in 0..task.users.len() {
                let path = dir.join(format!("user{u:03}/checkpoint.json"));
                match load_single(&path)? {
                    FittedSingle::Cost(m) => models.push(m),
                    FittedSingle::Policy(p) => policies.push(p),
                }
            }
            if policies.is_empty() {
                Ok(Fitted::RecommenderCost(models))
            } else {
                Ok(Fitted::RecommenderPolicy(policies))
            }
        }
    }
}

/// Resamples `demos` with replacement to `n` atoms when counts differ, so the
/// matched-count exact-W1 oracle applies.
fn match_counts(
    demos: &EmpiricalMeasure,
    n: usize,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    if demos.len() == n {
        return Ok(demos.clone());
    }
    let weights = vec![1.0 / demos.len() as f64; demos.len()];
    let mut rng = stream_rng(seed, 0);
    let picks = resample_indices(&weights, n, &mut rng)?;
    EmpiricalMeasure::new(picks.iter().map(|&i| demos.get(i).clone()).collect())
}

pub fn eval_seed(
    config: &ExperimentConfig,
    seed: u64,
    data: &SeedData,
    fitted: &Fitted,
) -> Result<SeedMetrics> {
    let eval_seed_value = stream_seed(seed, STAGE_EVAL);
    match (data, fitted) {
        (
            SeedData::Recovery {
                baseline,
                demos,
                meta,
            },
            Fitted::Cost(model),
        ) => {
            let (transported, _) = optimal_measure(
                model,
                baseline,
                config.experiment.gamma,
                &transport_options(config),
            )?;
            let matched = match_counts(demos, baseline.len(), eval_seed_value)?;
            let w1 = exact_w1(&matched, &transported)?;
            let theta_err = theta_error(model, &meta.theta_true);
            Ok(SeedMetrics {
                seed,
                top1: None,
                top5: None,
                w1: Some(w1),
                theta_err,
            })
        }
        (SeedData::Recovery { demos, .. }, Fitted::Policy(policy)) => {
            let samples = bc_samples(policy, demos.len(), eval_seed_value)?;
            let w1 = exact_w1(demos, &samples)?;
            Ok(SeedMetrics {
                seed,
                top1: None,
                top5: None,
                w1: Some(w1),
                theta_err: None,
            })
        }
        (SeedData::Recommender { task }, fitted) => {
            let mut outcomes = Vec::new();
            let mut theta_errs = Vec::new();
            for (u, user) in task.users.iter().enumerate() {
                let scores = match fitted {
                    Fitted::RecommenderCost(models) => {
                        theta_errs.extend(theta_error(&models[u], &user.theta_true));
                        score_items_by_cost(&models[u], &task.item_measure)?
                    }
                    Fitted::RecommenderPolicy(policies) => {
                        bc_score(&policies[u], &task.item_measure)?
                    }
                    _ => {
                        return Err(Error::invalid(
                            "recommender data requires per-user fits",
                        ))
                    }
                };
                for &event in &user.test_events {
                    outcomes.push(RankingOutcome::new(scores.clone(), event)?);
                }
            }
            let top1 = top_k_rate(&outcomes, 1)?;
            let top5 = top_k_rate(&outcomes, 5)?;
            let theta_err = if theta_errs.is_empty() {
                None
            } else {
                Some(pairwise_sum(&theta_errs) / theta_errs.len() as f64)
            };
            Ok(SeedMetrics {
                seed,
                top1: Some(top1),
                top5: Some(top5),
                w1: None,
                theta_err,
            })
        }
        _ => Err(Error::invalid("fitted artifact does not match the data kind")),
    }
}

fn theta_error(model: &CostModel, theta_true: &[f64]) -> Option<f64> {
    let theta = model.theta();
    if theta.len() != theta_true.len() {
        return None;
    }
    let diff: Vec<f64> = theta.iter().zip(theta_true).map(|(a, b)| a - b).collect();
    Some(norm(&diff))
}

/// Runs the full per-seed pipeline, writes all artifacts, and aggregates the
/// report. Wall-clock times go to `timing.csv` only, keeping `report.json`
/// byte-reproducible.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport> {
    fs::create_dir_all(&config.experiment.out_dir)?;
    let mut per_seed = Vec::new();
    let mut timings: Vec<(u64, f64)> = Vec::new();
    let mut failure: Option<String> = None;

    for &seed in &config.experiment.seeds {
        let start = Instant::now();
        let outcome = (|| -> Result<SeedMetrics> {
            let data = simulate_seed(config, seed)?;
            write_sim_artifacts(config, seed, &data)?;
            let fit_output = fit_seed(config, seed, &data)?;
            write_fit_artifacts(config, seed, &fit_output)?;
            let metrics = eval_seed(config, seed, &data, &fit_output.fitted)?;
            let dir = eval_dir(config, seed);
            fs::create_dir_all(&dir)?;
            fs::write(
                dir.join("metrics.json"),
                serde_json::to_string_pretty(&metrics)?,
            )?;
            Ok(metrics)
        })();
        timings.push((seed, start.elapsed().as_secs_f64()));
        match outcome {
            Ok(metrics) => per_seed.push(metrics),
            Err(e) => {
                failure = Some(format!("seed {seed}: {e}"));
                break;
            }
        }
    }

    let report = MetricsReport::aggregate(config, per_seed, failure.clone());
    fs::write(
        config.experiment.out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    write_metrics_csv(config, &report)?;
    write_timing_csv(config, &timings)?;
    match failure {
        Some(msg) => Err(Error::numeric("run_experiment", msg)),
        None => Ok(report),
    }
}

/// Runs every configuration (one method + train proportion each) and collects
/// one comparison row per run; the recommender environment also gets a
/// ground-truth oracle row per train proportion.
///
/// All configurations must share the environment, seeds, gamma, and truth.
pub fn compare_methods(configs: &[ExperimentConfig]) -> Result<Vec<CompareRow>> {
    if configs.is_empty() {
        return Err(Error::invalid("compare_methods needs at least one config"));
    }
    let base = &configs[0];
    for c in configs {
        if c.env != base.env
            || c.experiment.seeds != base.experiment.seeds
            || c.truth != base.truth
            || c.experiment.gamma != base.experiment.gamma
        {
            return Err(Error::invalid(
                "compare_methods: configs must share env, seeds, gamma, and truth",
            ));
        }
    }

    let mut rows = Vec::new();
    for config in configs {
        let started = Instant::now();
        let sub_out = config.experiment.out_dir.join(format!(
            "compare/{}_p{}",
            config.experiment.method.name(),
            format_p(config.experiment.train_p)
        ));
        let mut sub = config.clone();
        sub.experiment.out_dir = sub_out;
        let report = run_experiment(&sub)?;
        rows.push(CompareRow {
            method: config.experiment.method.name().to_string(),
            p: config.experiment.train_p,
            top1: report.averages.top1,
            top5: report.averages.top5,
            w1: report.averages.w1,
            theta_err: report.averages.theta_err,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    if base.env.kind == EnvKind::Recommender {
        let mut ps: Vec<f64> = Vec::new();
        for c in configs {
            if !ps.contains(&c.experiment.train_p) {
                ps.push(c.experiment.train_p);
            }
        }
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for p in ps {
            let started = Instant::now();
            let oracle_config = base.with_method_and_p(base.experiment.method, p);
            let row = oracle_row(&oracle_config)?;
            rows.push(CompareRow {
                seconds: started.elapsed().as_secs_f64(),
                ..row
            });
        }
    }
    Ok(rows)
}

/// Scores the recommender task with the hidden true parameters.
fn oracle_row(config: &ExperimentConfig) -> Result<CompareRow> {
    let mut per_seed = Vec::new();
    for &seed in &config.experiment.seeds {
        let data = simulate_seed(config, seed)?;
        let task = match &data {
            SeedData::Recommender { task } => task,
            _ => return Err(Error::invalid("oracle rows exist only for the recommender")),
        };
        let models: Vec<CostModel> = task
            .users
            .iter()
            .map(|u| CostModel::quadratic(u.theta_true.clone()))
            .collect::<Result<_>>()?;
        let metrics = eval_seed(config, seed, &data, &Fitted::RecommenderCost(models))?;
        per_seed.push(metrics);
    }
    let report = MetricsReport::aggregate(config, per_seed, None);
    Ok(CompareRow {
        method: "oracle".to_string(),
        p: config.experiment.train_p,
        top1: report.averages.top1,
        top5: report.averages.top5,
        w1: report.averages.w1,
        theta_err: report.averages.theta_err,
        seconds: 0.0,
    })
}

pub fn format_p(p: f64) -> String {
    format!("{:02}", (p * 100.0).round() as u32)
}


/// Expands the `[compare]` section into derived configs, runs them, and
/// writes `compare.csv` plus the timing-free `compare_report.json`.
pub fn run_compare(config: &ExperimentConfig) -> Result<Vec<CompareRow>> {
    let section = config
        .compare
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [compare] section".into()))?;
    let mut derived = Vec::new();
    for &method in &section.methods {
        for &p in &section.train_p {
            derived.push(config.with_method_and_p(method, p));
        }
    }
    let rows = compare_methods(&derived)?;
    fs::create_dir_all(&config.experiment.out_dir)?;
    write_compare_csv(config, &rows)?;
    let stripped: Vec<BTreeMap<String, serde_json::Value>> = rows
        .iter()
        .map(|r| {
            let mut m = BTreeMap::new();
            m.insert("method".into(), serde_json::json!(r.method));
            m.insert("p".into(), serde_json::json!(r.p));
            m.insert("top1".into(), serde_json::json!(r.top1));
            m.insert("top5".into(), serde_json::json!(r.top5));
            m.insert("w1".into(), serde_json::json!(r.w1));
            m.insert("theta_err".into(), serde_json::json!(r.theta_err));
            m
        })
        .collect();
    let report = serde_json::json!({
        "schema_version": 1,
        "rows": stripped,
    });
    fs::write(
        config.experiment.out_dir.join("compare_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(rows)
}
