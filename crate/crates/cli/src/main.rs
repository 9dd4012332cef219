use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use painfusion::Error;
use painfusion_cli::commands;
use painfusion_cli::config::{Overrides, RunConfig};

/// Correlation-weighted multimodal fusion for protective-behaviour detection.
#[derive(Debug, Parser)]
#[command(name = "painfusion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Base seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Normality diagnostics, Q-Q pairs and a correlation-method recommendation.
    Analyze,
    /// Fusion weights from the training split.
    Weights,
    /// Write a synthetic dataset and its manifest.
    Synth,
    /// Train and score one arm on the validation split.
    Evaluate,
    /// Run the four comparison arms for each configured classifier.
    Matrix,
    /// Leave-one-subject-out cross-validation.
    Loocv,
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
    };
    let config = match &cli.config {
        Some(path) => RunConfig::load(path, &overrides)?,
        None => RunConfig::parse("", Path::new(""), &overrides)?,
    };
    let written = match cli.command {
        Command::Analyze => commands::cmd_analyze(&config)?,
        Command::Weights => commands::cmd_weights(&config)?,
        Command::Synth => commands::cmd_synth(&config)?,
        Command::Evaluate => commands::cmd_evaluate(&config)?,
        Command::Matrix => commands::cmd_matrix(&config)?,
        Command::Loocv => commands::cmd_loocv(&config)?,
    };
    eprintln!(
        "wrote {} file(s) under {}",
        written.len(),
        config.out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.category());
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
