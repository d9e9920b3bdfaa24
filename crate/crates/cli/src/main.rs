//! `erase`: label corruption, training, evaluation and diagnostics over
//! graph bundles.

mod artifacts;
mod commands;
mod config;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use artifacts::MissingCheckpoint;
use config::{Experiment, Flags};

#[derive(Parser)]
#[command(name = "erase", version, about = "Noise-tolerant node representation learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corrupt the training labels of a bundle
    Corrupt(Flags),
    /// Train one run per repetition
    Train(Flags),
    /// Readout accuracy over the runs under --out
    Eval(Flags),
    /// Denoise the training labels over the train-only subgraph
    Propagate(Flags),
    /// Cosine matrix, PCA projection and (with --clean-twin) NTVR of a run
    Diagnose(Flags),
    /// Corrupt, train and evaluate over a noise grid
    Sweep(Flags),
}

fn thread_pool(deterministic: bool) -> Result<()> {
    let threads = match std::env::var("ERASE_THREADS") {
        Ok(v) => v.parse().map_err(|_| anyhow::anyhow!("ERASE_THREADS must be a count, got {v:?}"))?,
        Err(_) => 0,
    };
    let threads = if deterministic { 1 } else { threads };
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (flags, f): (&Flags, fn(&Experiment) -> Result<()>) = match &cli.command {
        Command::Corrupt(fl) => (fl, commands::corrupt),
        Command::Train(fl) => (fl, commands::train_cmd),
        Command::Eval(fl) => (fl, commands::eval),
        Command::Propagate(fl) => (fl, commands::propagate),
        Command::Diagnose(fl) => (fl, commands::diagnose),
        Command::Sweep(fl) => (fl, commands::sweep),
    };
    let exp = Experiment::resolve(flags)?;
    thread_pool(flags.deterministic)?;
    f(&exp)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<MissingCheckpoint>()) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
