//! `jsqa`: JND pair generation, SVM validation, contrastive pretraining,
//! MOS fine-tuning, evaluation and figure export.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 runtime failure.

mod commands;
mod config;
mod figures;

use clap::{error::ErrorKind, Parser, Subcommand};

use commands::Failure;
use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "jsqa", version, about = "Speech quality assessment with JND-based contrastive pretraining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Overrides,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate a seeded manifest of JND training pairs.
    GenPairs,
    /// Check generated pairs against a trained JND classifier.
    ValidateJnd,
    /// Fit the linear JND classifier on labeled pair features.
    TrainSvm,
    /// Contrastive pretraining of the encoder on JND pairs.
    Pretrain,
    /// Fine-tune a MOS regressor on labeled clips.
    Finetune,
    /// Score a checkpoint on a labeled split.
    Evaluate,
    /// Write histogram and training-curve figure data.
    ExportFigures,
    /// Print the layer table, parameter count and receptive field.
    Inspect,
}

fn run(command: Command, cfg: &RunConfig) -> Result<(), Failure> {
    match command {
        Command::GenPairs => commands::gen_pairs(cfg),
        Command::ValidateJnd => commands::validate_jnd(cfg),
        Command::TrainSvm => commands::train_svm(cfg),
        Command::Pretrain => commands::pretrain_cmd(cfg),
        Command::Finetune => commands::finetune_cmd(cfg),
        Command::Evaluate => commands::evaluate_cmd(cfg),
        Command::ExportFigures => commands::export_figures(cfg),
        Command::Inspect => commands::inspect(cfg),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
                    if !e.use_stderr() =>
                {
                    0
                }
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let cfg = match RunConfig::resolve(&cli.flags, |k| std::env::var(k).ok()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("usage error: {e:#}");
            std::process::exit(1);
        }
    };
    if cfg.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global() {
            log::warn!("could not size worker pool: {e}");
        }
    }
    if let Err(f) = run(cli.command, &cfg) {
        eprintln!("{f}");
        std::process::exit(f.exit_code());
    }
}
