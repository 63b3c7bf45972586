//! Experiment harness for the `wioc` library: configuration, the
//! simulate/fit/eval pipeline, and report writers. The `wioc` binary is a
//! thin CLI over this crate.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, Method};
pub use pipeline::{compare_methods, run_compare, run_experiment};
pub use report::{CompareRow, MetricsReport};
