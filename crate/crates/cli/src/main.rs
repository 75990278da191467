//! `condex`: conditional extremes pipeline from raw CSV to diagnostics.

mod config;
mod error;
mod ingest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "condex", version, about = "Spatio-temporal conditional extremes")]
struct Cli {
    /// TOML run configuration; relative paths inside it resolve against its directory.
    #[arg(short, long, global = true, default_value = "condex.toml")]
    config: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit marginal models and write Laplace-scale data.
    Transform,
    /// Find extreme episodes at the conditioning site.
    Decluster,
    /// Fit the configured model to the episodes.
    Fit,
    /// WAIC, CPO/PIT, region exceedances and chi curves for a fitted model.
    Diagnose,
    /// Held-out RMSE for the quadrant and episode folds.
    Cv,
    /// Simulate episodes from a fitted model.
    Simulate,
    /// Empirical chi curves by distance band.
    Chi,
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    // synth needs no input data, so it may run without a config file
    let cfg = match (&cli.command, cli.config.exists()) {
        (Command::Synth { .. }, false) => RunConfig::default(),
        _ => RunConfig::load(&cli.config)?,
    };
    if let Some(n) = cfg.data.threads {
        rayon_threads(n)?;
    }
    match cli.command {
        Command::Transform => pipeline::transform(&cfg),
        Command::Decluster => pipeline::decluster(&cfg),
        Command::Fit => pipeline::fit_model(&cfg),
        Command::Diagnose => pipeline::diagnose(&cfg),
        Command::Cv => pipeline::cross_validate(&cfg),
        Command::Simulate => pipeline::simulate(&cfg),
        Command::Chi => pipeline::chi(&cfg),
        Command::Synth { out } => pipeline::synth(&cfg.synth, &out),
    }
}

fn rayon_threads(n: usize) -> CliResult<()> {
    if n == 0 {
        return Err(CliError::Config("data.threads must be at least 1".into()));
    }
    // read by the thread pool on first use
    std::env::set_var("RAYON_NUM_THREADS", n.to_string());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
