//! Parameterized cost families `c(theta, tau)` with the derivative bundles the
//! transport machinery needs: input gradient and Hessian, parameter gradient,
//! and the mixed second partial.
//!
//! Families:
//! - `Quadratic`: `c = 0.5 * ||tau - theta||^2`, all derivatives analytic.
//! - `LinearFeatures`: `c = theta . phi(tau)` for a fixed feature map, analytic.
//! - `Mlp`: a scalar-head tanh network in `tau` with `theta` = flat weights.
//!   Input gradient and Hessian are exact (reverse mode, forward-over-reverse);
//!   the mixed partial is assembled column-wise by central finite differences
//!   of the input gradient over weight perturbations (step 1e-5).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::numeric::{all_finite, dot, sq_dist};
use crate::traj::Trajectory;

/// Fixed feature maps for the `LinearFeatures` family. Both keep `m = K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMap {
    /// `phi(tau) = tau`.
    Identity,
    /// `phi(tau) = tanh(tau)` elementwise.
    ElementwiseTanh,
}

impl FeatureMap {
    pub fn phi(&self, tau: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Identity => tau.to_vec(),
            FeatureMap::ElementwiseTanh => tau.iter().map(|x| x.tanh()).collect(),
        }
    }

    /// `J[m][k] = d phi_m / d tau_k`. Diagonal for both maps.
    fn jacobian_diag(&self, tau: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Identity => vec![1.0; tau.len()],
            FeatureMap::ElementwiseTanh => tau
                .iter()
                .map(|x| {
                    let t = x.tanh();
                    1.0 - t * t
                })
                .collect(),
        }
    }

    /// Diagonal of `sum_m theta_m * d2 phi_m / d tau^2`.
    fn hess_contraction_diag(&self, tau: &[f64], theta: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Identity => vec![0.0; tau.len()],
            FeatureMap::ElementwiseTanh => tau
                .iter()
                .zip(theta)
                .map(|(x, th)| {
                    let t = x.tanh();
                    th * (-2.0 * t * (1.0 - t * t))
                })
                .collect(),
        }
    }
}

/// A parameterized state-cost function over trajectories.
#[derive(Debug, Clone, PartialEq)]
pub enum CostModel {
    Quadratic { theta: Vec<f64> },
    LinearFeatures { theta: Vec<f64>, map: FeatureMap },
    Mlp { net: Mlp },
}

/// Value plus every derivative the implicit-gradient chaining needs.
/// `mixed_thetatau[(a, k)] = d2 c / d theta_a d tau_k`.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    pub value: f64,
    pub grad_tau: Vec<f64>,
    pub hess_tautau: DMatrix<f64>,
    pub grad_theta: Vec<f64>,
    pub mixed_thetatau: DMatrix<f64>,
}

/// Step for the mlp mixed-partial finite differences.
const MIXED_FD_STEP: f64 = 1e-5;

impl CostModel {
    pub fn quadratic(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || !all_finite(&theta) {
            return Err(Error::invalid("quadratic theta must be nonempty and finite"));
        }
        Ok(CostModel::Quadratic { theta })
    }

    pub fn linear_features(theta: Vec<f64>, map: FeatureMap) -> Result<Self> {
        if theta.is_empty() || !all_finite(&theta) {
            return Err(Error::invalid("linear theta must be nonempty and finite"));
        }
        Ok(CostModel::LinearFeatures { theta, map })
    }

    /// Scalar-head tanh network cost; `hidden` defaults to `[16, 16]` at the
    /// call sites that build desk-scale models.
    pub fn mlp(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(CostModel::Mlp {
            net: Mlp::init(sizes, seed, 0)?,
        })
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            CostModel::Quadratic { .. } => "quadratic",
            CostModel::LinearFeatures {
                map: FeatureMap::Identity,
                ..
            } => "linear_features",
            CostModel::LinearFeatures {
                map: FeatureMap::ElementwiseTanh,
                ..
            } => "linear_features_tanh",
            CostModel::Mlp { .. } => "mlp",
        }
    }

    /// Input dimension `K` the model expects.
    pub fn input_dim(&self) -> usize {
        match self {
            CostModel::Quadratic { theta } => theta.len(),
            CostModel::LinearFeatures { theta, .. } => theta.len(),
            CostModel::Mlp { net } => net.input_dim(),
        }
    }

    pub fn theta_dim(&self) -> usize {
        match self {
            CostModel::Quadratic { theta } => theta.len(),
            CostModel::LinearFeatures { theta, .. } => theta.len(),
            CostModel::Mlp { net } => net.num_params(),
        }
    }

    pub fn theta(&self) -> Vec<f64> {
        match self {
            CostModel::Quadratic { theta } => theta.clone(),
            CostModel::LinearFeatures { theta, .. } => theta.clone(),
            CostModel::Mlp { net } => net.weights().to_vec(),
        }
    }

    pub fn set_theta(&mut self, new_theta: &[f64]) -> Result<()> {
        if new_theta.len() != self.theta_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.theta_dim(),
                got: new_theta.len(),
            });
        }
        if !all_finite(new_theta) {
            return Err(Error::invalid("theta must be finite"));
        }
        match self {
            CostModel::Quadratic { theta } => theta.copy_from_slice(new_theta),
            CostModel::LinearFeatures { theta, .. } => theta.copy_from_slice(new_theta),
            CostModel::Mlp { net } => net.set_weights(new_theta)?,
        }
        Ok(())
    }

    fn check_input(&self, tau: &Trajectory) -> Result<()> {
        if tau.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: tau.dim(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, tau: &Trajectory) -> Result<f64> {
        self.check_input(tau)?;
        let v = match self {
            CostModel::Quadratic { theta } => 0.5 * sq_dist(tau.values(), theta),
            CostModel::LinearFeatures { theta, map } => dot(theta, &map.phi(tau.values())),
            CostModel::Mlp { net } => net.forward(tau.values())?[0],
        };
        if !v.is_finite() {
            return Err(Error::numeric("cost_eval", "non-finite value"));
        }
        Ok(v)
    }

    /// Value and input gradient, the fast path used by the inner solver.
    pub fn eval_grad_tau(&self, tau: &Trajectory) -> Result<(f64, Vec<f64>)> {
        self.check_input(tau)?;
        let (v, g) = match self {
            CostModel::Quadratic { theta } => {
                let g: Vec<f64> = tau.values().iter().zip(theta).map(|(x, t)| x - t).collect();
                (0.5 * sq_dist(tau.values(), theta), g)
            }
            CostModel::LinearFeatures { theta, map } => {
                let v = dot(theta, &map.phi(tau.values()));
                let jd = map.jacobian_diag(tau.values());
                let g: Vec<f64> = jd.iter().zip(theta).map(|(j, t)| j * t).collect();
                (v, g)
            }
            CostModel::Mlp { net } => net.scalar_with_grad(tau.values())?,
        };
        if !v.is_finite() || !all_finite(&g) {
            return Err(Error::numeric("cost_eval_grad", "non-finite gradient"));
        }
        Ok((v, g))
    }

    pub fn grad_theta(&self, tau: &Trajectory) -> Result<Vec<f64>> {
        self.check_input(tau)?;
        let g = match self {
            CostModel::Quadratic { theta } => {
                theta.iter().zip(tau.values()).map(|(t, x)| t - x).collect()
            }
            CostModel::LinearFeatures { map, .. } => map.phi(tau.values()),
            CostModel::Mlp { net } => {
                let cache = net.forward_cached(tau.values())?;
                net.vjp(&cache, &[1.0])?.1
            }
        };
        if !all_finite(&g) {
            return Err(Error::numeric("cost_grad_theta", "non-finite gradient"));
        }
        Ok(g)
    }

    /// Full derivative bundle at `tau`.
    pub fn derivatives(&self, tau: &Trajectory) -> Result<DerivativeBundle> {
        self.check_input(tau)?;
        let k = self.input_dim();
        let bundle = match self {
            CostModel::Quadratic { theta } => {
                let grad_tau: Vec<f64> =
                    tau.values().iter().zip(theta).map(|(x, t)| x - t).collect();
                let grad_theta: Vec<f64> = grad_tau.iter().map(|g| -g).collect();
                DerivativeBundle {
                    value: 0.5 * sq_dist(tau.values(), theta),
                    grad_tau,
                    hess_tautau: DMatrix::identity(k, k),
                    grad_theta,
                    mixed_thetatau: -DMatrix::<f64>::identity(k, k),
                }
            }
            CostModel::LinearFeatures { theta, map } => {
                let phi = map.phi(tau.values());
                let jd = map.jacobian_diag(tau.values());
                let hd = map.hess_contraction_diag(tau.values(), theta);
                let grad_tau: Vec<f64> = jd.iter().zip(theta).map(|(j, t)| j * t).collect();
                DerivativeBundle {
                    value: dot(theta, &phi),
                    grad_tau,
                    hess_tautau: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(hd)),
                    grad_theta: phi,
                    mixed_thetatau: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(jd)),
                }
            }
            CostModel::Mlp { net } => {
                let cache = net.forward_cached(tau.values())?;
                let value = cache.output()[0];
                let (grad_tau, grad_theta) = net.vjp(&cache, &[1.0])?;
                // Exact Hessian column by column via HVPs, then symmetrize.
                let mut hess = DMatrix::zeros(k, k);
                for col in 0..k {
                    let mut e = vec![0.0; k];
                    e[col] = 1.0;
                    let hv = net.scalar_input_hvp(tau.values(), &e)?;
                    for row in 0..k {
                        hess[(row, col)] = hv[row];
                    }
                }
                let asym = (&hess - hess.transpose()).abs().max();
                if asym > 1e-10 {
                    return Err(Error::numeric(
                        "cost_derivatives(mlp)",
                        format!("Hessian asymmetry {asym:.3e}"),
                    ));
                }
                let hess = (&hess + hess.transpose()) * 0.5;
                let mixed = mlp_mixed_fd(net, tau)?;
                DerivativeBundle {
                    value,
                    grad_tau,
                    hess_tautau: hess,
                    grad_theta,
                    mixed_thetatau: mixed,
                }
            }
        };
        if !bundle.value.is_finite()
            || !all_finite(&bundle.grad_tau)
            || !all_finite(&bundle.grad_theta)
            || bundle.hess_tautau.iter().any(|x| !x.is_finite())
            || bundle.mixed_thetatau.iter().any(|x| !x.is_finite())
        {
            return Err(Error::numeric("cost_derivatives", "non-finite entry in bundle"));
        }
        Ok(bundle)
    }
}

/// `d2 c / d theta_a d tau_k` for the mlp family: central differences of the
/// input gradient over one weight at a time.
fn mlp_mixed_fd(net: &Mlp, tau: &Trajectory) -> Result<DMatrix<f64>> {
    let k = net.input_dim();
    let p = net.num_params();
    let mut mixed = DMatrix::zeros(p, k);
    let mut plus = net.clone();
    let mut minus = net.clone();
    for a in 0..p {
        let w = net.weights()[a];
        plus.weights_mut()[a] = w + MIXED_FD_STEP;
        minus.weights_mut()[a] = w - MIXED_FD_STEP;
        let gp = plus.scalar_with_grad(tau.values())?.1;
        let gm = minus.scalar_with_grad(tau.values())?.1;
        for col in 0..k {
            mixed[(a, col)] = (gp[col] - gm[col]) / (2.0 * MIXED_FD_STEP);
        }
        plus.weights_mut()[a] = w;
        minus.weights_mut()[a] = w;
    }
    Ok(mixed)
}
