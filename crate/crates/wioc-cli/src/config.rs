//! Experiment configuration: one TOML file with sections, plus the two
//! environment-variable overrides `WIOC_SEED` and `WIOC_OUT`.
//!
//! The exact grammar is documented in `docs/formats/config.md`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wioc::envs::DemoMode;
use wioc::error::{Error, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Train proportions the protocol allows.
pub const ALLOWED_TRAIN_P: [f64; 4] = [0.5, 0.6, 0.7, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Kl,
    W,
    Maxent,
    Bc,
    PolicyDirect,
    Joint,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Kl => "kl",
            Method::W => "w",
            Method::Maxent => "maxent",
            Method::Bc => "bc",
            Method::PolicyDirect => "policy_direct",
            Method::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "kl" => Ok(Method::Kl),
            "w" => Ok(Method::W),
            "maxent" => Ok(Method::Maxent),
            "bc" => Ok(Method::Bc),
            "policy_direct" => Ok(Method::PolicyDirect),
            "joint" => Ok(Method::Joint),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    GaussianWalk,
    HawkesEvents,
    Recommender,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_train_p")]
    pub train_p: f64,
}

fn default_gamma() -> f64 {
    1.0
}

fn default_train_p() -> f64 {
    0.8
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub kind: EnvKind,
    pub k: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    // hawkes_events
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_mu0")]
    pub mu0: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    // recommender
    #[serde(default = "default_n_users")]
    pub n_users: usize,
    #[serde(default = "default_n_items")]
    pub n_items: usize,
    #[serde(default = "default_events")]
    pub events_per_user: usize,
    #[serde(default = "default_theta_scale")]
    pub theta_scale: f64,
    #[serde(default = "default_choice_gamma")]
    pub choice_gamma: f64,
}

fn default_n() -> usize {
    256
}
fn default_horizon() -> f64 {
    50.0
}
fn default_mu0() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    1.0
}
fn default_n_users() -> usize {
    30
}
fn default_n_items() -> usize {
    20
}
fn default_events() -> usize {
    24
}
fn default_theta_scale() -> f64 {
    1.5
}
fn default_choice_gamma() -> f64 {
    0.7
}

/// Ground-truth generator for recovery environments.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    pub theta: Vec<f64>,
    #[serde(default = "default_demo_mode")]
    pub demo_mode: DemoMode,
    #[serde(default)]
    pub n_resample: Option<usize>,
}

fn default_demo_mode() -> DemoMode {
    DemoMode::W
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_minibatch")]
    pub minibatch: usize,
    #[serde(default = "default_n_critic")]
    pub n_critic: usize,
    #[serde(default = "default_critic_lr")]
    pub critic_lr: f64,
    #[serde(default = "default_clip_bound")]
    pub clip_bound: f64,
    #[serde(default = "default_hidden")]
    pub hidden: [usize; 2],
    #[serde(default = "default_refresh_every")]
    pub refresh_every: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_noise_dim")]
    pub noise_dim: usize,
    /// 0 disables the exact-W1 training diagnostic.
    #[serde(default)]
    pub w1_diag_every: usize,
    /// Control-cost distance inside the inner solve.
    #[serde(default = "default_transport_distance")]
    pub transport_distance: TransportDistance,
    #[serde(default = "default_transport_eps")]
    pub transport_eps: f64,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportDistance {
    Smoothed,
    Squared,
}

fn default_transport_distance() -> TransportDistance {
    TransportDistance::Smoothed
}

fn default_iterations() -> usize {
    500
}
fn default_step_size() -> f64 {
    1e-3
}
fn default_minibatch() -> usize {
    128
}
fn default_n_critic() -> usize {
    5
}
fn default_critic_lr() -> f64 {
    5e-5
}
fn default_clip_bound() -> f64 {
    0.01
}
fn default_hidden() -> [usize; 2] {
    [16, 16]
}
fn default_refresh_every() -> usize {
    10
}
fn default_workers() -> usize {
    1
}
fn default_noise_dim() -> usize {
    2
}
fn default_transport_eps() -> f64 {
    1e-6
}
fn default_grad_tol() -> f64 {
    1e-8
}

impl Default for FitSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub methods: Vec<Method>,
    pub train_p: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentSection,
    pub env: EnvSection,
    #[serde(default)]
    pub truth: Option<TruthSection>,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub compare: Option<CompareSection>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        config.apply_env_overrides()?;
        Ok(config)
    }

    /// `WIOC_SEED` replaces the seed list with a single seed; `WIOC_OUT`
    /// replaces the output directory. No other variables are honored.
    fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var("WIOC_SEED") {
            let seed: u64 = v
                .parse()
                .map_err(|e| Error::Config(format!("WIOC_SEED={v:?}: {e}")))?;
            self.experiment.seeds = vec![seed];
        }
        if let Ok(v) = std::env::var("WIOC_OUT") {
            self.experiment.out_dir = PathBuf::from(v);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.experiment.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        check_train_p(self.experiment.train_p)?;
        if self.experiment.gamma <= 0.0 || self.experiment.gamma.is_nan() {
            return Err(Error::Config("gamma must be positive".into()));
        }
        if self.experiment.lambda < 0.0 {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if self.env.k == 0 {
            return Err(Error::Config("env.k must be >= 1".into()));
        }
        match self.env.kind {
            EnvKind::GaussianWalk | EnvKind::HawkesEvents => {
                let truth = self.truth.as_ref().ok_or_else(|| {
                    Error::Config("recovery environments need a [truth] section".into())
                })?;
                if truth.theta.len() != self.env.k {
                    return Err(Error::Config(format!(
                        "truth.theta has {} entries, env.k is {}",
                        truth.theta.len(),
                        self.env.k
                    )));
                }
            }
            EnvKind::Recommender => {
                if self.env.n_items < 2 {
                    return Err(Error::Config("recommender needs n_items >= 2".into()));
                }
            }
        }
        if let Some(compare) = &self.compare {
            if compare.methods.is_empty() || compare.train_p.is_empty() {
                return Err(Error::Config(
                    "[compare] needs nonempty methods and train_p".into(),
                ));
            }
            for &p in &compare.train_p {
                check_train_p(p)?;
            }
        }
        Ok(())
    }

    /// Derived copy with one method and train proportion swapped in.
    pub fn with_method_and_p(&self, method: Method, train_p: f64) -> ExperimentConfig {
        let mut c = self.clone();
        c.experiment.method = method;
        c.experiment.train_p = train_p;
        c.compare = None;
        c
    }
}

pub fn check_train_p(p: f64) -> Result<()> {
    if ALLOWED_TRAIN_P.contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "train_p must be one of {ALLOWED_TRAIN_P:?}, got {p}"
        )))
    }
}
