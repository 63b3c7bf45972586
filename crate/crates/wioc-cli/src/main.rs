//! Command-line entry point.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on numeric
//! failures, 1 on anything else (I/O and the like).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wioc::error::Error;
use wioc_cli::config::{ExperimentConfig, Method};
use wioc_cli::pipeline;

#[derive(Parser)]
#[command(name = "wioc", about = "Inverse optimal control experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the fitted/evaluated method.
    #[arg(long)]
    method: Option<String>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate baseline and demonstration data.
    Simulate(Common),
    /// Fit the configured method on simulated data.
    Fit(Common),
    /// Evaluate a fitted checkpoint.
    Eval(Common),
    /// Run the full pipeline over all seeds and write the report.
    Report(Common),
    /// Run every method and train proportion in the compare section and
    /// tabulate.
    Compare(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.experiment.seeds = vec![seed];
    }
    if let Some(method) = &common.method {
        config.experiment.method = Method::parse(method)?;
    }
    if let Some(out) = &common.out {
        config.experiment.out_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(common) => {
            let config = load(&common)?;
            for &seed in &config.experiment.seeds {
                let data = pipeline::simulate_seed(&config, seed)?;
                pipeline::write_sim_artifacts(&config, seed, &data)?;
                println!("simulated seed {seed} -> {}", pipeline::data_dir(&config, seed).display());
            }
            Ok(())
        }
        Command::Fit(common) => {
            let config = load(&common)?;
            for &seed in &config.experiment.seeds {
                let data = pipeline::simulate_seed(&config, seed)?;
                pipeline::write_sim_artifacts(&config, seed, &data)?;
                let output = pipeline::fit_seed(&config, seed, &data)?;
                pipeline::write_fit_artifacts(&config, seed, &output)?;
                println!(
                    "fitted {} seed {seed} -> {}",
                    config.experiment.method.name(),
                    pipeline::fit_dir(&config, seed).display()
                );
            }
            Ok(())
        }
        Command::Eval(common) => {
            let config = load(&common)?;
            for &seed in &config.experiment.seeds {
                let data = pipeline::simulate_seed(&config, seed)?;
                let fitted = pipeline::load_fitted(&config, seed, &data)?;
                let metrics = pipeline::eval_seed(&config, seed, &data, &fitted)?;
                let dir = pipeline::eval_dir(&config, seed);
                std::fs::create_dir_all(&dir)?;
                std::fs::write(
                    dir.join("metrics.json"),
                    serde_json::to_string_pretty(&metrics)?,
                )?;
                println!("evaluated seed {seed}: {}", serde_json::to_string(&metrics)?);
            }
            Ok(())
        }
        Command::Report(common) => {
            let config = load(&common)?;
            let report = pipeline::run_experiment(&config)?;
            println!(
                "report written to {} (averages: {})",
                config.experiment.out_dir.join("report.json").display(),
                serde_json::to_string(&report.averages)?
            );
            Ok(())
        }
        Command::Compare(common) => {
            let config = load(&common)?;
            let rows = pipeline::run_compare(&config)?;
            println!("method,p,top1,top5,w1,theta_err");
            for r in &rows {
                println!(
                    "{},{},{:?},{:?},{:?},{:?}",
                    r.method, r.p, r.top1, r.top5, r.w1, r.theta_err
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } | Error::InvalidInput(_) => {
                    ExitCode::from(2)
                }
                Error::Numeric { .. } => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
