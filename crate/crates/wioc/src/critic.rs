//! The dual-form potential: a scalar tanh network whose Lipschitz constant is
//! controlled by clipping every weight into `[-clip_bound, +clip_bound]`.

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::traj::Trajectory;

pub const DEFAULT_CLIP_BOUND: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    net: Mlp,
    clip_bound: f64,
}

impl Critic {
    /// Affine-tanh-affine-tanh-affine scalar head over `input_dim` inputs.
    /// Freshly initialized critics are already projected.
    pub fn new(input_dim: usize, hidden: [usize; 2], clip_bound: f64, seed: u64) -> Result<Self> {
        if clip_bound <= 0.0 || !clip_bound.is_finite() {
            return Err(Error::invalid(format!(
                "clip_bound must be positive, got {clip_bound}"
            )));
        }
        let net = Mlp::init(vec![input_dim, hidden[0], hidden[1], 1], seed, 1)?;
        let mut critic = Critic { net, clip_bound };
        critic.project_in_place();
        Ok(critic)
    }

    pub fn from_net(net: Mlp, clip_bound: f64) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::invalid("critic requires a scalar head"));
        }
        if clip_bound <= 0.0 || !clip_bound.is_finite() {
            return Err(Error::invalid("clip_bound must be positive"));
        }
        Ok(Critic { net, clip_bound })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn clip_bound(&self) -> f64 {
        self.clip_bound
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn eval(&self, tau: &Trajectory) -> Result<f64> {
        Ok(self.net.forward(tau.values())?[0])
    }

    /// Value and exact input gradient (reverse mode).
    pub fn eval_with_grad(&self, tau: &Trajectory) -> Result<(f64, Vec<f64>)> {
        self.net.scalar_with_grad(tau.values())
    }

    /// Clamps every weight into the clip box. Idempotent.
    pub fn project(&self) -> Critic {
        let mut out = self.clone();
        out.project_in_place();
        out
    }

    pub fn project_in_place(&mut self) {
        let b = self.clip_bound;
        for w in self.net.weights_mut() {
            *w = w.clamp(-b, b);
        }
    }

    pub fn is_projected(&self) -> bool {
        self.net.weights().iter().all(|w| w.abs() <= self.clip_bound)
    }

    /// Largest ratio `|f(x) - f(y)| / ||x - y||` over the given pairs,
    /// skipping coincident points.
    pub fn empirical_lipschitz(&self, pairs: &[(&Trajectory, &Trajectory)]) -> Result<f64> {
        let mut best: f64 = 0.0;
        for (x, y) in pairs {
            let d = crate::traj::euclidean_distance(x, y)?;
            if d == 0.0 {
                continue;
            }
            let fx = self.eval(x)?;
            let fy = self.eval(y)?;
            best = best.max((fx - fy).abs() / d);
        }
        Ok(best)
    }
}
