use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ehrelay::experiment::{run_experiment, validate_config, RunOptions};
use ehrelay::Error;

/// Transmit-power experiments for energy-harvesting relay networks.
#[derive(Parser)]
#[command(name = "ehrelay", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment sweep and write a CSV.
    Run {
        /// Experiment config (JSON); an empty file means "all defaults".
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's trials-per-sweep-point.
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Record wall-clock runtimes per row (breaks byte-identical output).
        #[arg(long)]
        timing: bool,
    },
    /// Check a config file and echo the normalized experiment spec.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> ehrelay::Result<()> {
    match cli.cmd {
        Cmd::Run {
            config,
            out,
            seed,
            trials,
            jobs,
            timing,
        } => {
            let spec = validate_config(&config)?;
            run_experiment(
                &spec,
                &RunOptions {
                    out,
                    seed,
                    trials,
                    jobs,
                    timing,
                },
            )
        }
        Cmd::Validate { config } => {
            let spec = validate_config(&config)?;
            println!("{}", serde_json::to_string_pretty(&spec)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidScenario(_) => ExitCode::from(2),
                Error::SolverStall => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}
