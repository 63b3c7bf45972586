//! Mass-transport construction of the optimal measure.
//!
//! Each baseline trajectory moves independently to the minimizer of
//!
//! ```text
//! g(theta, tau) = c(theta, tau) + gamma * d(tau0, tau)
//! ```
//!
//! The inner solver is plain gradient descent with Armijo backtracking
//! (start step 1.0, shrink 0.5, c1 = 1e-4). Inside the solver `d` is either
//! the smoothed Euclidean distance `sqrt(||tau - tau0||^2 + eps^2)`, which
//! keeps the Hessian defined at `tau = tau0`, or the squared distance
//! `||tau - tau0||^2` (fully smooth, used by analytic-Jacobian checks).
//!
//! The Jacobian of the minimizer with respect to the cost parameters comes
//! from the implicit function theorem:
//! `d tau*/d theta = -[d2 g/d tau2]^{-1} [d2 g/(d theta d tau)]^T`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::numeric::{all_finite, axpy, norm, pairwise_sum, sq_dist};
use crate::traj::{EmpiricalMeasure, Trajectory};

/// Control-cost distance used inside the inner solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlDistance {
    /// `gamma * sqrt(||tau - tau0||^2 + eps^2)`.
    Smoothed { eps: f64 },
    /// `gamma * ||tau - tau0||^2`.
    Squared,
}

impl Default for ControlDistance {
    fn default() -> Self {
        ControlDistance::Smoothed { eps: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct TransportOptions {
    pub distance: ControlDistance,
    /// Stop once the gradient norm of `g` falls below this.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub armijo_c1: f64,
    pub backtrack_shrink: f64,
    pub max_backtracks: usize,
    /// Worker threads for per-trajectory solves (1 = sequential). Results are
    /// gathered in input order and bitwise independent of this setting.
    pub workers: usize,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            distance: ControlDistance::default(),
            grad_tol: 1e-8,
            max_iters: 500,
            armijo_c1: 1e-4,
            backtrack_shrink: 0.5,
            max_backtracks: 60,
            workers: 1,
        }
    }
}

/// One solved inner problem: the pair `(tau0, tau*)` plus solve diagnostics.
#[derive(Debug, Clone)]
pub struct TransportResult {
    pub source: Trajectory,
    pub target: Trajectory,
    /// `g(theta, tau*)`; never exceeds `g(theta, tau0)`.
    pub inner_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm_final: f64,
}

/// `g` and its pieces for one fixed source trajectory.
struct InnerObjective<'a> {
    model: &'a CostModel,
    tau0: &'a [f64],
    gamma: f64,
    distance: ControlDistance,
}

impl InnerObjective<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let c = self.model.eval(&Trajectory::new(x.to_vec())?)?;
        Ok(c + self.gamma * self.dist_value(x))
    }

    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (c, mut grad) = self
            .model
            .eval_grad_tau(&Trajectory::new(x.to_vec())?)?;
        let dv = self.dist_value(x);
        let dg = self.dist_grad(x);
        for (g, d) in grad.iter_mut().zip(&dg) {
            *g += self.gamma * d;
        }
        Ok((c + self.gamma * dv, grad))
    }

    fn dist_value(&self, x: &[f64]) -> f64 {
        if self.gamma == 0.0 {
            return 0.0;
        }
        let sq = sq_dist(x, self.tau0);
        match self.distance {
            ControlDistance::Smoothed { eps } => (sq + eps * eps).sqrt(),
            ControlDistance::Squared => sq,
        }
    }

    fn dist_grad(&self, x: &[f64]) -> Vec<f64> {
        if self.gamma == 0.0 {
            return vec![0.0; x.len()];
        }
        match self.distance {
            ControlDistance::Smoothed { eps } => {
                let sq = sq_dist(x, self.tau0);
                let s = (sq + eps * eps).sqrt();
                x.iter().zip(self.tau0).map(|(a, b)| (a - b) / s).collect()
            }
            ControlDistance::Squared => x
                .iter()
                .zip(self.tau0)
                .map(|(a, b)| 2.0 * (a - b))
                .collect(),
        }
    }

    /// Hessian of `gamma * d` at `x`.
    fn dist_hess(&self, x: &[f64]) -> DMatrix<f64> {
        let k = x.len();
        if self.gamma == 0.0 {
            return DMatrix::zeros(k, k);
        }
        match self.distance {
            ControlDistance::Smoothed { eps } => {
                let u: Vec<f64> = x.iter().zip(self.tau0).map(|(a, b)| a - b).collect();
                let s = (sq_dist(x, self.tau0) + eps * eps).sqrt();
                let mut h = DMatrix::identity(k, k) / s;
                let s3 = s * s * s;
                for i in 0..k {
                    for j in 0..k {
                        h[(i, j)] -= u[i] * u[j] / s3;
                    }
                }
                h * self.gamma
            }
            ControlDistance::Squared => DMatrix::identity(k, k) * (2.0 * self.gamma),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma < 0.0 || !gamma.is_finite() {
        return Err(Error::invalid(format!("gamma must be >= 0, got {gamma}")));
    }
    Ok(())
}

/// Solves `min_tau g(theta, tau)` for one source trajectory.
///
/// Warm-started at whichever of `tau0` / `warm` has the lower objective, so
/// the result never beats `tau0`'s objective from above.
pub fn transport_step(
    model: &CostModel,
    tau0: &Trajectory,
    gamma: f64,
    opts: &TransportOptions,
    warm: Option<&Trajectory>,
) -> Result<TransportResult> {
    check_gamma(gamma)?;
    if tau0.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: tau0.dim(),
        });
    }
    let obj = InnerObjective {
        model,
        tau0: tau0.values(),
        gamma,
        distance: opts.distance,
    };

    let mut x = tau0.values().to_vec();
    let mut f = obj.value(&x)?;
    if let Some(w) = warm {
        if w.dim() == tau0.dim() {
            let fw = obj.value(w.values())?;
            if fw < f {
                x = w.values().to_vec();
                f = fw;
            }
        }
    }

    let (_, mut grad) = obj.value_grad(&x)?;
    let mut gn = norm(&grad);
    let mut iterations = 0;

    for it in 0..opts.max_iters {
        if gn <= opts.grad_tol {
            break;
        }
        iterations = it + 1;

        // Accepted candidate: point, objective, and the gradient when the
        // flat-regime guard already computed it.
        type Candidate = (Vec<f64>, f64, Option<(Vec<f64>, f64)>);
        let mut step = 1.0;
        let mut accepted: Option<Candidate> = None;
        let mut best_fc = f64::INFINITY;
        // Once the remaining descent falls below f64 resolution of f, the
        // evaluated objective hovers within a few ulps; treat that band as
        // flat and let the gradient norm drive acceptance.
        let f_noise = 4.0 * f64::EPSILON * (1.0 + f.abs());
        for _ in 0..opts.max_backtracks {
            let cand = axpy(&x, -step, &grad);
            let fc = match obj.value(&cand) {
                Ok(v) if v.is_finite() => v,
                _ => {
                    step *= opts.backtrack_shrink;
                    continue;
                }
            };
            best_fc = best_fc.min(fc);
            // Armijo only decides while its threshold is representable below
            // f; once the required decrease rounds away, the gradient-decrease
            // guard below takes over (otherwise fc == f candidates with
            // overlong steps would be accepted and inflate the gradient).
            let armijo_rhs = f - opts.armijo_c1 * step * gn * gn;
            if armijo_rhs < f && fc <= armijo_rhs {
                accepted = Some((cand, fc, None));
                break;
            }
            if fc <= f + f_noise {
                let (_, gc) = obj.value_grad(&cand)?;
                let gnc = norm(&gc);
                if gnc < gn * (1.0 - 1e-3) {
                    accepted = Some((cand, fc.min(f), Some((gc, gnc))));
                    break;
                }
            }
            step *= opts.backtrack_shrink;
        }

        match accepted {
            Some((cand, fc, cached_grad)) => {
                x = cand;
                f = fc;
                match cached_grad {
                    Some((g, n)) => {
                        grad = g;
                        gn = n;
                    }
                    None => {
                        let (_, g) = obj.value_grad(&x)?;
                        gn = norm(&g);
                        grad = g;
                    }
                }
            }
            None => {
                if best_fc > f + 1e-12 * (1.0 + f.abs()) {
                    return Err(Error::numeric(
                        "transport_step",
                        format!(
                            "objective increases across a full backtracking sweep \
                             (iter {it}, f {f:.6e}, grad_norm {gn:.3e}, best candidate f \
                             {best_fc:.6e})"
                        ),
                    ));
                }
                break; // flat stall; report via the converged flag
            }
        }
    }

    if !all_finite(&x) || !f.is_finite() {
        return Err(Error::numeric("transport_step", "non-finite iterate"));
    }
    Ok(TransportResult {
        source: tau0.clone(),
        target: Trajectory::new(x)?,
        inner_objective: f,
        iterations,
        converged: gn <= opts.grad_tol,
        grad_norm_final: gn,
    })
}

/// Transports every baseline atom independently, building the optimal measure
/// `(1/n) sum_i delta_{tau_i*}`. Output order matches input order and is
/// bitwise independent of `opts.workers`.
pub fn optimal_measure(
    model: &CostModel,
    baseline: &EmpiricalMeasure,
    gamma: f64,
    opts: &TransportOptions,
) -> Result<(EmpiricalMeasure, Vec<TransportResult>)> {
    optimal_measure_warm(model, baseline, gamma, opts, None)
}

/// As [`optimal_measure`], warm-starting atom `i` at `warm[i]` when provided.
pub fn optimal_measure_warm(
    model: &CostModel,
    baseline: &EmpiricalMeasure,
    gamma: f64,
    opts: &TransportOptions,
    warm: Option<&[Trajectory]>,
) -> Result<(EmpiricalMeasure, Vec<TransportResult>)> {
    if let Some(w) = warm {
        if w.len() != baseline.len() {
            return Err(Error::DimensionMismatch {
                expected: baseline.len(),
                got: w.len(),
            });
        }
    }
    let solve_one = |i: usize| -> Result<TransportResult> {
        transport_step(model, baseline.get(i), gamma, opts, warm.map(|w| &w[i]))
            .map_err(|e| match e {
                Error::Numeric { context, detail } => Error::Numeric {
                    context,
                    detail: format!("trajectory {i}: {detail}"),
                },
                other => other,
            })
    };

    let results: Vec<Result<TransportResult>> = if opts.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::numeric("optimal_measure", e.to_string()))?;
        pool.install(|| (0..baseline.len()).into_par_iter().map(solve_one).collect())
    } else {
        (0..baseline.len()).map(solve_one).collect()
    };

    let results: Vec<TransportResult> = results.into_iter().collect::<Result<_>>()?;
    let measure = EmpiricalMeasure::new(results.iter().map(|r| r.target.clone()).collect())?;
    Ok((measure, results))
}

/// Implicit-function-theorem Jacobian of the inner minimizer, stored with
/// `theta_dim` rows and `K` columns: `J[(a, k)] = d tau*_k / d theta_a`.
///
/// Solves `-H^{-1} M^T` (transposed into row-major-theta orientation) by LU
/// factorization, adding ridge jitter `1e-8 * I` when the smallest eigenvalue
/// of `H` is below `1e-10`. Chaining `J * grad_tau f` yields the outer
/// objective's theta-gradient.
pub fn implicit_jacobian(
    model: &CostModel,
    result: &TransportResult,
    gamma: f64,
    distance: ControlDistance,
) -> Result<DMatrix<f64>> {
    check_gamma(gamma)?;
    if !result.converged {
        return Err(Error::invalid(format!(
            "implicit_jacobian requires a converged transport result \
             (grad_norm_final {:.3e})",
            result.grad_norm_final
        )));
    }
    let bundle = model.derivatives(&result.target)?;
    let obj = InnerObjective {
        model,
        tau0: result.source.values(),
        gamma,
        distance,
    };
    let mut hess = bundle.hess_tautau + obj.dist_hess(result.target.values());
    if hess.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("implicit_jacobian", "non-finite Hessian"));
    }
    let min_eig = hess
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < 1e-10 {
        let k = hess.nrows();
        hess += DMatrix::<f64>::identity(k, k) * 1e-8;
    }
    let lu = hess.lu();
    let rhs = bundle.mixed_thetatau.transpose(); // K x theta_dim
    let solved = lu
        .solve(&rhs)
        .ok_or_else(|| Error::numeric("implicit_jacobian", "singular Hessian"))?;
    Ok(-solved.transpose())
}

/// Chains per-trajectory Jacobians with critic input-gradients:
/// `(1/n) sum_i J_i * grad_tau f(tau_i*)`.
pub fn chain_outer_gradient(
    jacobians: &[DMatrix<f64>],
    critic_grads: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if jacobians.len() != critic_grads.len() {
        return Err(Error::DimensionMismatch {
            expected: jacobians.len(),
            got: critic_grads.len(),
        });
    }
    if jacobians.is_empty() {
        return Err(Error::invalid("chain_outer_gradient needs n >= 1 terms"));
    }
    let theta_dim = jacobians[0].nrows();
    let mut per_coord: Vec<Vec<f64>> = vec![Vec::with_capacity(jacobians.len()); theta_dim];
    for (jac, grad) in jacobians.iter().zip(critic_grads) {
        if jac.nrows() != theta_dim || jac.ncols() != grad.len() {
            return Err(Error::invalid("jacobian/gradient shape mismatch"));
        }
        let contrib = jac * DVector::from_column_slice(grad);
        for (a, v) in contrib.iter().enumerate() {
            per_coord[a].push(*v);
        }
    }
    let n = jacobians.len() as f64;
    let out: Vec<f64> = per_coord.iter().map(|c| pairwise_sum(c) / n).collect();
    if !all_finite(&out) {
        return Err(Error::numeric("chain_outer_gradient", "non-finite gradient"));
    }
    Ok(out)
}

/// Closed-form minimizer of `0.5 ||tau - mu||^2 + gamma ||tau - tau0||` (the
/// plain-distance quadratic case): a soft-threshold move toward `mu` with a
/// dead zone once `gamma >= ||mu - tau0||`.
pub fn quadratic_prox_oracle(mu: &[f64], tau0: &[f64], gamma: f64) -> Vec<f64> {
    let m: Vec<f64> = mu.iter().zip(tau0).map(|(a, b)| a - b).collect();
    let mn = norm(&m);
    let scale = if mn > 0.0 { (1.0 - gamma / mn).max(0.0) } else { 0.0 };
    tau0.iter().zip(&m).map(|(t, mi)| t + scale * mi).collect()
}
