//! Behavior-cloning comparator: an unconditional trajectory generator trained
//! by supervised distance to the demonstrations.
//!
//! The environments here are trajectory-level (no per-step action labels), so
//! classic state-to-action cloning degenerates to cloning whole trajectories:
//! the policy maps seeded noise to a trajectory and minimizes squared distance
//! to the nearest demo in the batch. By interface the trainer never sees the
//! baseline measure.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversarial::{noise_batch, Generator};
use crate::error::{Error, Result};
use crate::numeric::{mean, norm, sq_dist};
use crate::opt::Adam;
use crate::rng::stream_rng;
use crate::traj::EmpiricalMeasure;

/// Seed and size of the fixed evaluation noise batch every policy shares.
const EVAL_NOISE_SEED: u64 = 0xBC;
const EVAL_NOISE_COUNT: usize = 64;

/// A trained cloning policy: generator weights plus its trajectory dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ClonePolicy {
    generator: Generator,
}

impl ClonePolicy {
    pub fn from_generator(generator: Generator) -> ClonePolicy {
        ClonePolicy { generator }
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn output_dim(&self) -> usize {
        self.generator.output_dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.generator.noise_dim()
    }

    /// Samples over an arbitrary noise batch.
    pub fn sample_measure(&self, noise: &[Vec<f64>]) -> Result<EmpiricalMeasure> {
        self.generator.sample_measure(noise)
    }

    /// Mean output over the fixed evaluation noise batch.
    pub fn mean_output(&self) -> Result<Vec<f64>> {
        let noise = noise_batch(self.noise_dim(), EVAL_NOISE_COUNT, EVAL_NOISE_SEED, 0);
        let mut acc = vec![0.0; self.output_dim()];
        for z in &noise {
            let out = self.generator.forward(z)?;
            for (a, v) in acc.iter_mut().zip(out.values()) {
                *a += v / noise.len() as f64;
            }
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone)]
pub struct BcOptions {
    pub steps: usize,
    pub minibatch: usize,
    pub step_size: f64,
    pub hidden: [usize; 2],
    pub seed: u64,
}

impl Default for BcOptions {
    fn default() -> Self {
        BcOptions {
            steps: 2000,
            minibatch: 128,
            step_size: 1e-3,
            hidden: [16, 16],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BcRecord {
    pub step: usize,
    pub loss: f64,
}

/// Trains the cloning policy: each step draws a noise batch and a demo batch
/// and descends the mean squared distance from each generated trajectory to
/// its nearest demo in the batch.
pub fn bc_fit(
    demos: &EmpiricalMeasure,
    noise_dim: usize,
    opts: &BcOptions,
) -> Result<(ClonePolicy, Vec<BcRecord>)> {
    if noise_dim == 0 {
        return Err(Error::invalid("noise_dim must be >= 1"));
    }
    let k = demos.dim();
    let generator = Generator::new(noise_dim, opts.hidden, k, opts.seed)?;
    let mut policy = ClonePolicy { generator };
    let mut weights = policy.generator.net().weights().to_vec();
    let mut adam = Adam::new(weights.len(), opts.step_size);
    let mut rng = stream_rng(opts.seed, 4);
    let mut log = Vec::with_capacity(opts.steps);
    let batch = opts.minibatch.max(1);

    for step in 0..opts.steps {
        let noise: Vec<Vec<f64>> = (0..batch)
            .map(|_| {
                (0..noise_dim)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        let demo_idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..demos.len())).collect();

        let mut grad = vec![0.0; weights.len()];
        let mut losses = Vec::with_capacity(noise.len());
        for z in &noise {
            let cache = policy.generator.net().forward_cached(z)?;
            let out = cache.output();
            // Nearest demo within the batch.
            let nearest = demo_idx
                .iter()
                .map(|&j| demos.get(j))
                .min_by(|a, b| {
                    sq_dist(out, a.values())
                        .partial_cmp(&sq_dist(out, b.values()))
                        .unwrap()
                })
                .unwrap();
            losses.push(0.5 * sq_dist(out, nearest.values()));
            let upstream: Vec<f64> = out
                .iter()
                .zip(nearest.values())
                .map(|(o, d)| (o - d) / noise.len() as f64)
                .collect();
            let (_, gw) = policy.generator.net().vjp(&cache, &upstream)?;
            for (acc, g) in grad.iter_mut().zip(&gw) {
                *acc += g;
            }
        }
        let loss = mean(&losses);
        if !loss.is_finite() {
            return Err(Error::numeric("bc_fit", format!("non-finite loss at step {step}")));
        }
        adam.step(&mut weights, &grad);
        policy.generator.net_mut().set_weights(&weights)?;
        log.push(BcRecord { step, loss });
    }
    Ok((policy, log))
}

/// Scores candidates by negative distance to the policy's mean output.
pub fn bc_score(policy: &ClonePolicy, candidates: &EmpiricalMeasure) -> Result<Vec<f64>> {
    if candidates.dim() != policy.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: policy.output_dim(),
            got: candidates.dim(),
        });
    }
    let center = policy.mean_output()?;
    Ok(candidates
        .iter()
        .map(|t| {
            let diff: Vec<f64> = t.values().iter().zip(&center).map(|(a, b)| a - b).collect();
            -norm(&diff)
        })
        .collect())
}

/// Trajectory samples over a fresh deterministic noise batch of `count` draws.
pub fn bc_samples(policy: &ClonePolicy, count: usize, seed: u64) -> Result<EmpiricalMeasure> {
    let noise = noise_batch(policy.noise_dim(), count, seed, 5);
    policy.sample_measure(&noise)
}
