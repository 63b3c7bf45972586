//! Two-step inverse optimal control over trajectory measures.
//!
//! The crate implements two frameworks for recovering a cost function from
//! observed behavior, both built on an uncontrolled baseline sample:
//!
//! - **KL** ([`kl`]): the optimal controlled measure has a closed form as a
//!   softmax reweighting of the baseline atoms; the cost parameters are fit by
//!   maximum likelihood. With a uniform baseline this is maximum-entropy IRL.
//! - **Wasserstein** ([`transport`], [`adversarial`]): the optimal measure is
//!   a per-atom mass transport (each baseline trajectory moves to the
//!   minimizer of `cost + gamma * distance`), and the cost parameters are fit
//!   adversarially against a weight-clipped critic, with gradients through the
//!   inner argmin via the implicit function theorem.
//!
//! Supporting modules: trajectories and measures ([`traj`]), an exact
//! assignment-based W1 oracle ([`w1`]), ranking metrics ([`ranking`]), cost
//! families and critics ([`cost`], [`critic`]), synthetic environments
//! ([`envs`]), and a behavior-cloning baseline ([`bc`]).

pub mod adversarial;
pub mod bc;
pub mod checkpoint;
pub mod cost;
pub mod critic;
pub mod envs;
pub mod error;
pub mod kl;
pub mod nn;
pub mod numeric;
pub mod opt;
pub mod ranking;
pub mod rng;
pub mod traj;
pub mod transport;
pub mod w1;

pub use error::{Error, Result};
pub use traj::{EmpiricalMeasure, Trajectory, TrajectoryKind};
