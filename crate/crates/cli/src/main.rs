use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hullgauge::pipeline::{self, RunConfig};

#[derive(Parser)]
#[command(
    name = "hullgauge",
    version,
    about = "Hull fouling severity pipeline on synthetic imagery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the run seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Render the synthetic dataset and its manifest.
    Generate,
    /// Learning-rate range test and quasi-random search.
    Tune,
    /// Cross-validate the ensemble members at full epochs.
    Train,
    /// Pick the best subset of trained models.
    Ensemble,
    /// Choose operating points on the pooled validation scores.
    Threshold,
    /// Score the test split and simulate the expert panel.
    Evaluate,
    /// Compare method labels with the expert group.
    CompareRaters,
}

fn run(cli: &Cli) -> hullgauge::Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| hullgauge::Error::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Generate => pipeline::cmd_generate(&cfg).map(drop),
        Command::Tune => pipeline::cmd_tune(&cfg).map(drop),
        Command::Train => pipeline::cmd_train(&cfg).map(drop),
        Command::Ensemble => pipeline::cmd_ensemble(&cfg).map(drop),
        Command::Threshold => pipeline::cmd_threshold(&cfg).map(drop),
        Command::Evaluate => pipeline::cmd_evaluate(&cfg).map(drop),
        Command::CompareRaters => pipeline::cmd_compare_raters(&cfg).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
