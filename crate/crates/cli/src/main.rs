//! Config-driven experiment runner. Exit codes: 0 success, 1 partial
//! failure (some cells failed or the run produced an empty report),
//! 2 configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::ExperimentConfig;
use famrisk::error::Error;

#[derive(Parser)]
#[command(name = "famrisk", version, about = "Family-graph disease risk experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Sectioned key-value config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed, propagated to every seeded component.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for parallel cells (defaults to the core count).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Trained model archive (defaults to <out>/model.json).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate pedigree and feature files (the full sweep grid when a
    /// [sweep] section is configured).
    Simulate,
    /// Train one architecture and archive the best-validation model.
    Train,
    /// Evaluate an archived model (or the rule-based screen) on the test split.
    Evaluate,
    /// Heritability-sweep ablation across the configured model list.
    Ablate,
    /// Edge-mode x convolution x pooling x learning-rate grid at h2 = 0.7.
    DesignStudy,
    /// Explain test targets and run the feature-selection comparison.
    Explain,
}

fn run(cli: Cli) -> commands::CommandResult {
    if let Some(jobs) = cli.jobs {
        // ignore failure: the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let config_text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?,
        None => String::new(),
    };
    let mut config = ExperimentConfig::parse(&config_text)?;
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    let ctx = Context {
        config,
        config_text,
        out: cli.out.clone(),
        model_path: cli.model.clone(),
    };
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Train => commands::train_cmd(&ctx),
        Command::Evaluate => commands::evaluate(&ctx),
        Command::Ablate => commands::ablate(&ctx),
        Command::DesignStudy => commands::design_study_cmd(&ctx),
        Command::Explain => commands::explain_cmd(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::from(0),
        Ok(true) => {
            eprintln!("warning: run finished with partial failures");
            ExitCode::from(1)
        }
        Err(e @ (Error::Config(_) | Error::Param(_) | Error::Usage(_))) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
