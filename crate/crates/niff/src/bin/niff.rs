//! Command-line interface for simulation, inference, prediction, and
//! summarization runs.

use clap::{Args, Parser, Subcommand};
use niff::harness::{
    run_experiment, run_predict, run_simulate, run_summarize, Algorithm, HarnessError,
    RunOverrides,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "niff", version, about = "Bayesian ODE state-path and parameter estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for chain parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonFlags {
    fn overrides(&self) -> RunOverrides {
        RunOverrides { seed: self.seed, out: self.out.clone(), threads: self.threads }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or load) the dataset and write the data artifacts.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Fit with nested stochastic variational inference.
    FitNsvi {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Sample with nested preconditioned SGLD (or plain NSGLD when the
    /// config disables preconditioning or selects the nsgld algorithm).
    FitNpsgld {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// State filtering with fixed model parameters.
    Filter {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Posterior-predictive simulation from a samples CSV.
    Predict {
        config: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Recompute summary.json from an output directory.
    Summarize { dir: PathBuf },
}

/// The subcommand implies an algorithm family; the config must agree.
fn check_algorithm(cfg_path: &std::path::Path, expect: &[Algorithm]) -> Result<(), HarnessError> {
    let (cfg, _) = niff::harness::load_config(cfg_path)?;
    if !expect.contains(&cfg.experiment.algorithm) {
        return Err(HarnessError::Invalid(format!(
            "config algorithm {:?} does not match this subcommand (expected one of {:?})",
            cfg.experiment.algorithm, expect
        )));
    }
    Ok(())
}

fn real_main() -> Result<(), HarnessError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, flags } => {
            let artifacts = run_simulate(&config, &flags.overrides())?;
            println!("wrote {} files to {}", artifacts.files.len(), artifacts.out_dir.display());
        }
        Command::FitNsvi { config, flags } => {
            check_algorithm(&config, &[Algorithm::Nsvi])?;
            let artifacts = run_experiment(&config, &flags.overrides())?;
            println!("wrote {} files to {}", artifacts.files.len(), artifacts.out_dir.display());
        }
        Command::FitNpsgld { config, flags } => {
            check_algorithm(&config, &[Algorithm::Npsgld, Algorithm::Nsgld])?;
            let artifacts = run_experiment(&config, &flags.overrides())?;
            println!("wrote {} files to {}", artifacts.files.len(), artifacts.out_dir.display());
        }
        Command::Filter { config, flags } => {
            check_algorithm(&config, &[Algorithm::FilterNsvi, Algorithm::FilterNpsgld])?;
            let artifacts = run_experiment(&config, &flags.overrides())?;
            println!("wrote {} files to {}", artifacts.files.len(), artifacts.out_dir.display());
        }
        Command::Predict { config, samples, flags } => {
            let artifacts = run_predict(&config, &samples, &flags.overrides())?;
            println!("wrote {}", artifacts.files[0].display());
        }
        Command::Summarize { dir } => {
            let artifacts = run_summarize(&dir)?;
            println!("wrote {}", artifacts.files[0].display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(HarnessError::Failed { artifacts, message }) => {
            eprintln!("run failed: {message}");
            eprintln!(
                "partial artifacts ({} files) in {}",
                artifacts.files.len(),
                artifacts.out_dir.display()
            );
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
