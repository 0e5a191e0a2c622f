//! Command-line pipeline: synth, prepare, train, denoise, evaluate, report.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Run;
use crate::config::Config;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "profdenoise", version, about = "Post-training profile denoising experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long, short)]
    config: PathBuf,
    /// Run directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use upstream artifacts even if they were built from another config.
    #[arg(long)]
    force: bool,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset.
    Synth(Common),
    /// Load, filter and split interactions.
    Prepare(Common),
    /// Train MultiVAE on the training split.
    Train(Common),
    /// Run denoising campaigns.
    Denoise {
        #[command(flatten)]
        common: Common,
        /// Only this configured denoiser.
        #[arg(long)]
        denoiser: Option<String>,
    },
    /// Rank the test items for every outcome log.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        denoiser: Option<String>,
    },
    /// Render tables and breakdowns from the evaluation records.
    Report(Common),
}

fn open(common: &Common) -> Result<Run, CliError> {
    let mut cfg = Config::load(&common.config).map_err(CliError::config)?;
    if let Some(seed) = common.seed_override {
        cfg.override_seed(seed);
    }
    let dir = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Run::new(cfg, dir, common.force)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(c) => commands::synth(&mut open(&c)?),
        Command::Prepare(c) => commands::prepare(&mut open(&c)?),
        Command::Train(c) => commands::train_cmd(&mut open(&c)?),
        Command::Denoise { common, denoiser } => commands::denoise(&mut open(&common)?, denoiser.as_deref()),
        Command::Evaluate { common, denoiser } => commands::evaluate(&mut open(&common)?, denoiser.as_deref()),
        Command::Report(c) => commands::report(&mut open(&c)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
