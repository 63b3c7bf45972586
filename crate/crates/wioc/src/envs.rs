//! Synthetic data: uncontrolled baseline measures, ground-truth demonstration
//! factories, and a synthetic recommender ranking task.
//!
//! Each trajectory draws from its own derived random stream
//! (see [`crate::rng`]), so generation is deterministic under
//! `(seed, spec)` and independent of worker count or call order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::kl::optimal_weights;
use crate::rng::stream_rng;
use crate::traj::{EmpiricalMeasure, Trajectory, TrajectoryKind};
use crate::transport::{optimal_measure, TransportOptions};

/// Gaussian random walk baseline: each trajectory is the cumulative sum of K
/// i.i.d. standard-normal increments.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WalkSpec {
    pub k: usize,
    pub n: usize,
    pub seed: u64,
}

pub fn sample_gaussian_walk(spec: &WalkSpec) -> Result<EmpiricalMeasure> {
    if spec.n == 0 || spec.k == 0 {
        return Err(Error::Config("walk requires n >= 1 and k >= 1".into()));
    }
    let rows: Vec<Trajectory> = (0..spec.n)
        .map(|i| {
            let mut rng = stream_rng(spec.seed, i as u64);
            let mut acc = 0.0;
            let values: Vec<f64> = (0..spec.k)
                .map(|_| {
                    let step: f64 = rng.sample(StandardNormal);
                    acc += step;
                    acc
                })
                .collect();
            Trajectory::new(values)
        })
        .collect::<Result<_>>()?;
    EmpiricalMeasure::new(rows)
}

/// Self-exciting event-time baseline with exponential kernel intensity
/// `lambda(t) = mu0 + sum_{t_j < t} alpha * exp(-beta (t - t_j))`,
/// sampled by Ogata thinning and cut to exactly `k` events.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HawkesSpec {
    pub k: usize,
    pub n: usize,
    pub horizon: f64,
    pub mu0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl HawkesSpec {
    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 {
            return Err(Error::Config("hawkes requires n >= 1 and k >= 1".into()));
        }
        if self.mu0 < 0.0 || self.alpha < 0.0 || self.beta <= 0.0 || self.beta.is_nan() {
            return Err(Error::Config(
                "hawkes requires mu0 >= 0, alpha >= 0, beta > 0".into(),
            ));
        }
        if self.alpha / self.beta >= 1.0 {
            return Err(Error::Config(format!(
                "hawkes must be subcritical: alpha/beta = {} >= 1",
                self.alpha / self.beta
            )));
        }
        if self.horizon <= 0.0 || self.horizon.is_nan() {
            return Err(Error::Config("hawkes horizon must be positive".into()));
        }
        Ok(())
    }
}

/// One thinning run over `[0, horizon]`. Between events the intensity decays,
/// so the post-event intensity is a valid upper bound for the next candidate.
pub fn sample_hawkes_raw(
    rng: &mut ChaCha8Rng,
    mu0: f64,
    alpha: f64,
    beta: f64,
    horizon: f64,
) -> Vec<f64> {
    let mut times = Vec::new();
    let mut t = 0.0;
    let mut excitation = 0.0; // sum of alpha * exp(-beta (t - t_j))
    loop {
        let bound = mu0 + excitation;
        if bound <= 0.0 {
            break;
        }
        let wait: f64 = rng.sample(Exp::new(bound).expect("positive rate"));
        let cand = t + wait;
        if cand > horizon {
            break;
        }
        let decayed = excitation * (-beta * (cand - t)).exp();
        let intensity = mu0 + decayed;
        let u: f64 = rng.gen();
        if u * bound <= intensity {
            times.push(cand);
            excitation = decayed + alpha;
        } else {
            excitation = decayed;
        }
        t = cand;
    }
    times
}

const HAWKES_MAX_ATTEMPTS: usize = 1000;

pub fn sample_hawkes(spec: &HawkesSpec) -> Result<EmpiricalMeasure> {
    spec.validate()?;
    let rows: Vec<Trajectory> = (0..spec.n)
        .map(|i| {
            let mut rng = stream_rng(spec.seed, i as u64);
            for _ in 0..HAWKES_MAX_ATTEMPTS {
                let times =
                    sample_hawkes_raw(&mut rng, spec.mu0, spec.alpha, spec.beta, spec.horizon);
                if times.len() >= spec.k {
                    return Trajectory::new(times[..spec.k].to_vec());
                }
            }
            Err(Error::Config(format!(
                "hawkes sequence {} produced fewer than {} events in [0, {}] across {} attempts",
                i, spec.k, spec.horizon, HAWKES_MAX_ATTEMPTS
            )))
        })
        .collect::<Result<_>>()?;
    EmpiricalMeasure::with_kind(
        rows,
        TrajectoryKind::EventTimes {
            horizon: spec.horizon,
        },
    )
}

/// Which framework generates the demonstrations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoMode {
    /// Resample baseline atoms with the closed-form softmax weights.
    Kl,
    /// Transport every baseline atom through the inner solve.
    W,
}

#[derive(Debug, Clone, Default)]
pub struct DemoOptions {
    /// Resample count for KL mode; defaults to the baseline size.
    pub n_resample: Option<usize>,
    pub seed: u64,
    pub transport: TransportOptions,
}

/// What generated a demonstration set, recorded for recovery scoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoMeta {
    pub mode: DemoMode,
    pub gamma: f64,
    pub theta_true: Vec<f64>,
    pub seed: u64,
}

/// Demonstrations from a known ground-truth cost.
///
/// W mode is exactly [`optimal_measure`] under `theta_true`; KL mode resamples
/// the baseline with the softmax weights (the optimal measure is absolutely
/// continuous with respect to the empirical baseline, so its support is the
/// baseline set).
pub fn make_demonstrations(
    theta_true: &CostModel,
    baseline: &EmpiricalMeasure,
    gamma: f64,
    mode: DemoMode,
    opts: &DemoOptions,
) -> Result<(EmpiricalMeasure, DemoMeta)> {
    let meta = DemoMeta {
        mode,
        gamma,
        theta_true: theta_true.theta(),
        seed: opts.seed,
    };
    let measure = match mode {
        DemoMode::W => optimal_measure(theta_true, baseline, gamma, &opts.transport)?.0,
        DemoMode::Kl => {
            let costs: Vec<f64> = baseline
                .iter()
                .map(|t| theta_true.eval(t))
                .collect::<Result<_>>()?;
            let sol = optimal_weights(&costs, gamma)?;
            let n_out = opts.n_resample.unwrap_or(baseline.len());
            let mut rng = stream_rng(opts.seed, 0);
            let picks = resample_indices(sol.weights(), n_out, &mut rng)?;
            EmpiricalMeasure::new(picks.iter().map(|&i| baseline.get(i).clone()).collect())?
        }
    };
    Ok((measure, meta))
}

/// Weighted sampling with replacement by inverse-CDF lookup.
pub fn resample_indices(
    weights: &[f64],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if weights.is_empty() || count == 0 {
        return Err(Error::invalid("resample needs weights and count >= 1"));
    }
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cumulative.push(acc);
    }
    let total = *cumulative.last().unwrap();
    Ok((0..count)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..total);
            match cumulative.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                Ok(i) | Err(i) => i.min(weights.len() - 1),
            }
        })
        .collect())
}

/// Synthetic item-recommendation task: fixed item features, hidden per-user
/// cost parameters, item choices drawn from the softmax of negative costs,
/// and a train/test split of each user's events.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RecommenderSpec {
    pub n_users: usize,
    pub n_items: usize,
    /// Item feature dimension (the trajectory dimension).
    pub k: usize,
    pub events_per_user: usize,
    /// Choice softness; large values flatten the choice distribution.
    pub gamma: f64,
    /// Scale of hidden user parameters.
    pub theta_scale: f64,
    /// Train proportion `p`.
    pub train_p: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct UserTask {
    pub theta_true: Vec<f64>,
    /// Item indices of training events.
    pub train_events: Vec<usize>,
    /// Held-out item indices.
    pub test_events: Vec<usize>,
    /// Feature vectors of the training choices.
    pub demos: EmpiricalMeasure,
}

#[derive(Debug, Clone)]
pub struct RecommenderTask {
    /// Fixed feature vector per item.
    pub items: Vec<Vec<f64>>,
    /// The uncontrolled measure: every item's features, once each.
    pub item_measure: EmpiricalMeasure,
    pub users: Vec<UserTask>,
}

pub fn recommender_task(spec: &RecommenderSpec) -> Result<RecommenderTask> {
    if spec.n_items < 2 {
        return Err(Error::Config("recommender requires n_items >= 2".into()));
    }
    if spec.n_users == 0 || spec.k == 0 || spec.events_per_user < 2 {
        return Err(Error::Config(
            "recommender requires users >= 1, k >= 1, events_per_user >= 2".into(),
        ));
    }
    if !(spec.train_p > 0.0 && spec.train_p < 1.0) {
        return Err(Error::Config(format!(
            "train_p must be in (0, 1), got {}",
            spec.train_p
        )));
    }
    let mut item_rng = stream_rng(spec.seed, 0);
    let items: Vec<Vec<f64>> = (0..spec.n_items)
        .map(|_| (0..spec.k).map(|_| item_rng.sample(StandardNormal)).collect())
        .collect();
    let item_measure = EmpiricalMeasure::from_rows(items.clone())?;

    let users: Vec<UserTask> = (0..spec.n_users)
        .map(|u| {
            let mut rng = stream_rng(spec.seed, 1 + u as u64);
            let theta_true: Vec<f64> = (0..spec.k)
                .map(|_| spec.theta_scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let model = CostModel::quadratic(theta_true.clone())?;
            let costs: Vec<f64> = item_measure
                .iter()
                .map(|t| model.eval(t))
                .collect::<Result<_>>()?;
            let sol = optimal_weights(&costs, spec.gamma)?;
            let events = resample_indices(sol.weights(), spec.events_per_user, &mut rng)?;
            let n_train = ((spec.train_p * events.len() as f64).round() as usize)
                .clamp(1, events.len() - 1);
            let train_events = events[..n_train].to_vec();
            let test_events = events[n_train..].to_vec();
            let demos = EmpiricalMeasure::from_rows(
                train_events.iter().map(|&i| items[i].clone()).collect(),
            )?;
            Ok(UserTask {
                theta_true,
                train_events,
                test_events,
                demos,
            })
        })
        .collect::<Result<_>>()?;

    Ok(RecommenderTask {
        items,
        item_measure,
        users,
    })
}

/// Scores every atom of `candidates` as the negative cost under `model`.
pub fn score_items_by_cost(
    model: &CostModel,
    candidates: &EmpiricalMeasure,
) -> Result<Vec<f64>> {
    candidates.iter().map(|t| Ok(-model.eval(t)?)).collect()
}
