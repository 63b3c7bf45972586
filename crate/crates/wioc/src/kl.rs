//! The KL framework: closed-form optimal measure over a finite baseline
//! sample, maximum-likelihood fitting of the cost parameters, the MaxEnt
//! special case, and the importance-sampled partition estimator.
//!
//! All softmax / partition arithmetic is done in log space; an overflow here
//! is a bug, not an error path.

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::numeric::{all_finite, logsumexp, norm, pairwise_sum};
use crate::opt::Adam;
use crate::rng::stream_rng;
use crate::traj::EmpiricalMeasure;

/// The optimal measure over a fixed baseline sample: probabilities
/// proportional to `exp(-c_i / gamma)`, plus the log of the sample-mean
/// partition `E_P[exp(-c/gamma)]`.
#[derive(Debug, Clone)]
pub struct KlSolution {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    log_partition: f64,
    gamma: f64,
}

impl KlSolution {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// Softmax of `-costs/gamma` in log space, with the sample-mean log-partition
/// `logsumexp(-costs/gamma) - log n`.
pub fn optimal_weights(costs: &[f64], gamma: f64) -> Result<KlSolution> {
    check_gamma(gamma)?;
    if costs.is_empty() {
        return Err(Error::invalid("optimal_weights needs n >= 1 costs"));
    }
    if !all_finite(costs) {
        return Err(Error::invalid("costs must be finite"));
    }
    let scaled: Vec<f64> = costs.iter().map(|c| -c / gamma).collect();
    let log_norm = logsumexp(&scaled);
    let log_weights: Vec<f64> = scaled.iter().map(|x| x - log_norm).collect();
    let weights: Vec<f64> = log_weights.iter().map(|x| x.exp()).collect();
    Ok(KlSolution {
        weights,
        log_weights,
        log_partition: log_norm - (costs.len() as f64).ln(),
        gamma,
    })
}

/// The objective `E_Q*[c] + gamma * KL(Q* || P)` evaluated directly from the
/// weights. At the optimum this equals `-gamma * log_partition`.
pub fn kl_objective_value(solution: &KlSolution, costs: &[f64], gamma: f64) -> Result<f64> {
    if solution.len() != costs.len() {
        return Err(Error::DimensionMismatch {
            expected: solution.len(),
            got: costs.len(),
        });
    }
    check_gamma(gamma)?;
    let n = costs.len() as f64;
    let terms: Vec<f64> = solution
        .weights
        .iter()
        .zip(costs)
        .map(|(&w, &c)| {
            if w == 0.0 {
                0.0 // limit of w (c + gamma log(w n)) as w -> 0
            } else {
                w * (c + gamma * (w.ln() + n.ln()))
            }
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

fn check_measures(demos: &EmpiricalMeasure, baseline: &EmpiricalMeasure) -> Result<()> {
    if demos.dim() != baseline.dim() {
        return Err(Error::DimensionMismatch {
            expected: baseline.dim(),
            got: demos.dim(),
        });
    }
    Ok(())
}

fn costs_of(model: &CostModel, measure: &EmpiricalMeasure) -> Result<Vec<f64>> {
    measure.iter().map(|t| model.eval(t)).collect()
}

/// Total log-likelihood of the demos under the optimal measure, with the
/// partition estimated over the finite baseline sample:
///
/// `sum_j [-c(theta, tau_j)/gamma] - n_d * logsumexp_i(-c(theta, tau0_i)/gamma)
///  + n_d * log(n_b)`.
pub fn log_likelihood(
    model: &CostModel,
    demos: &EmpiricalMeasure,
    baseline: &EmpiricalMeasure,
    gamma: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    check_measures(demos, baseline)?;
    let demo_terms: Vec<f64> = costs_of(model, demos)?.iter().map(|c| -c / gamma).collect();
    let base_terms: Vec<f64> = costs_of(model, baseline)?
        .iter()
        .map(|c| -c / gamma)
        .collect();
    let n_d = demos.len() as f64;
    let n_b = baseline.len() as f64;
    Ok(pairwise_sum(&demo_terms) - n_d * logsumexp(&base_terms) + n_d * n_b.ln())
}

/// Analytic gradient of [`log_likelihood`] with respect to theta:
///
/// `-(1/gamma) [ sum_j grad_theta c(tau_j) - n_d * E_{Q*}[grad_theta c] ]`.
pub fn log_likelihood_grad(
    model: &CostModel,
    demos: &EmpiricalMeasure,
    baseline: &EmpiricalMeasure,
    gamma: f64,
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    check_measures(demos, baseline)?;
    let dim = model.theta_dim();
    let base_costs = costs_of(model, baseline)?;
    let sol = optimal_weights(&base_costs, gamma)?;
    let mut grad = vec![0.0; dim];
    for tau in demos.iter() {
        let g = model.grad_theta(tau)?;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc -= gi / gamma;
        }
    }
    let n_d = demos.len() as f64;
    for (w, tau) in sol.weights().iter().zip(baseline.iter()) {
        let g = model.grad_theta(tau)?;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += n_d * w * gi / gamma;
        }
    }
    if !all_finite(&grad) {
        return Err(Error::numeric("log_likelihood_grad", "non-finite gradient"));
    }
    Ok(grad)
}

/// Importance-sampled log-partition over proposal samples:
/// `logsumexp_s(-c(tau_s)/gamma + log_ratio_s) - log S`,
/// where `log_ratio_s = log(dP/dQ)(tau_s)`.
///
/// With all ratios zero and proposal = baseline this reduces to the partition
/// term inside [`log_likelihood`].
pub fn partition_importance_estimate(
    model: &CostModel,
    gamma: f64,
    proposal_samples: &EmpiricalMeasure,
    log_density_ratios: &[f64],
) -> Result<f64> {
    check_gamma(gamma)?;
    if proposal_samples.len() != log_density_ratios.len() {
        return Err(Error::DimensionMismatch {
            expected: proposal_samples.len(),
            got: log_density_ratios.len(),
        });
    }
    if !all_finite(log_density_ratios) {
        return Err(Error::invalid("log density ratios must be finite"));
    }
    let terms: Vec<f64> = proposal_samples
        .iter()
        .zip(log_density_ratios)
        .map(|(tau, r)| Ok(-model.eval(tau)? / gamma + r))
        .collect::<Result<_>>()?;
    Ok(logsumexp(&terms) - (terms.len() as f64).ln())
}

/// Options for [`fit_kl`].
#[derive(Debug, Clone)]
pub struct KlFitOptions {
    /// Adam step size.
    pub step_size: f64,
    /// Passes over the demo set.
    pub epochs: usize,
    /// Demos per gradient step.
    pub minibatch: usize,
    /// MaxEnt view: treat the baseline as the uniform uncontrolled measure on
    /// its own support. Empirical baselines already carry uniform per-sample
    /// weights, so this selects the identical estimator; the flag records the
    /// modeling intent.
    pub uniform_baseline: bool,
    pub seed: u64,
}

impl Default for KlFitOptions {
    fn default() -> Self {
        KlFitOptions {
            step_size: 1e-3,
            epochs: 200,
            minibatch: 128,
            uniform_baseline: false,
            seed: 0,
        }
    }
}

/// One line of the KL training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub nll: f64,
    pub grad_norm: f64,
    pub theta_snapshot_path: Option<String>,
}

/// Maximum-likelihood ascent on [`log_likelihood`] over the demo set, using
/// Adam on minibatches of demos against the full-baseline partition.
///
/// Returns the fitted model and the per-epoch log (mean negative
/// log-likelihood and full-gradient norm).
pub fn fit_kl(
    init: &CostModel,
    demos: &EmpiricalMeasure,
    baseline: &EmpiricalMeasure,
    gamma: f64,
    opts: &KlFitOptions,
) -> Result<(CostModel, Vec<EpochRecord>)> {
    check_gamma(gamma)?;
    check_measures(demos, baseline)?;
    if init.input_dim() != demos.dim() {
        return Err(Error::DimensionMismatch {
            expected: demos.dim(),
            got: init.input_dim(),
        });
    }
    let mut model = init.clone();
    let mut theta = model.theta();
    let mut adam = Adam::new(theta.len(), opts.step_size);
    let mut log = Vec::with_capacity(opts.epochs);
    let n_d = demos.len();
    let batch = opts.minibatch.max(1).min(n_d);

    for epoch in 0..opts.epochs {
        let mut order: Vec<usize> = (0..n_d).collect();
        shuffle(&mut order, opts.seed, epoch as u64);
        for chunk in order.chunks(batch) {
            let grad = minibatch_nll_grad(&model, demos, baseline, gamma, chunk)?;
            if !all_finite(&grad) {
                return Err(Error::numeric(
                    "fit_kl",
                    format!("non-finite gradient at epoch {epoch}"),
                ));
            }
            adam.step(&mut theta, &grad);
            model.set_theta(&theta)?;
        }
        let ll = log_likelihood(&model, demos, baseline, gamma)?;
        let full_grad = log_likelihood_grad(&model, demos, baseline, gamma)?;
        log.push(EpochRecord {
            epoch,
            nll: -ll / n_d as f64,
            grad_norm: norm(&full_grad) / n_d as f64,
            theta_snapshot_path: None,
        });
    }
    Ok((model, log))
}

/// Gradient of the mean per-demo negative log-likelihood over a demo batch:
/// `(1/gamma) [ mean_batch grad_theta c - E_{Q*}[grad_theta c] ]`.
fn minibatch_nll_grad(
    model: &CostModel,
    demos: &EmpiricalMeasure,
    baseline: &EmpiricalMeasure,
    gamma: f64,
    batch: &[usize],
) -> Result<Vec<f64>> {
    let dim = model.theta_dim();
    let mut grad = vec![0.0; dim];
    for &j in batch {
        let g = model.grad_theta(demos.get(j))?;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi / (gamma * batch.len() as f64);
        }
    }
    let base_costs = costs_of(model, baseline)?;
    let sol = optimal_weights(&base_costs, gamma)?;
    for (w, tau) in sol.weights().iter().zip(baseline.iter()) {
        let g = model.grad_theta(tau)?;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc -= w * gi / gamma;
        }
    }
    Ok(grad)
}

/// Deterministic Fisher-Yates shuffle on a derived stream.
fn shuffle(xs: &mut [usize], seed: u64, stream: u64) {
    use rand::Rng;
    let mut rng = stream_rng(seed, stream);
    for i in (1..xs.len()).rev() {
        let j = rng.gen_range(0..=i);
        xs.swap(i, j);
    }
}
