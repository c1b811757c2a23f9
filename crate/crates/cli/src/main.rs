//! `augtta` — train the base classifier, replicate the stream scenarios,
//! compare selection strategies and render reports.
//!
//! Every flag can also be set through an environment variable with the
//! `AUGTTA_` prefix (`--reps` ↔ `AUGTTA_REPS`, `--dump-ledger` ↔
//! `AUGTTA_DUMP_LEDGER`, …). Precedence: flag > environment > `--config`
//! file > built-in default.

mod commands;
mod config;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CommonArgs, RunArgs};

#[derive(Parser)]
#[command(name = "augtta", version, about = "Augmented test-time adaptation stream simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the base model on clean glyphs and write `<out>/base.ckpt`.
    Train(CommonArgs),
    /// Run all arms over replicated scenario streams.
    Replicate(RunArgs),
    /// Compare windowing against random selection on the TTA+SAF pipeline.
    CompareSelection(RunArgs),
    /// Render summaries as text tables and plot-ready series files.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        /// Summary JSON files; defaults to `<out>/summary.json`.
        inputs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(common) => commands::train(common),
        Command::Replicate(args) => commands::replicate(args),
        Command::CompareSelection(args) => commands::compare(args),
        Command::Report { common, inputs } => commands::report(inputs, common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
