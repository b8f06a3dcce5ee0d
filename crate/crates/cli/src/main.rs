//! `polymanifold` — pipeline driver for polynomial-manifold snapshot
//! compression: `generate → pod → train → evaluate → sweep`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Every run
//! writes a `manifest.json` at the root of its `--out` directory
//! recording the effective configuration (numbers in `%.17g`), inputs,
//! artifacts, seeds, and per-stage timings.

mod cmds;
mod manifest;

use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "polymanifold", version, about = "Learn low-dimensional polynomial-manifold representations of simulation snapshots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the Korteweg–de Vries snapshot datasets.
    Generate(cmds::GenerateArgs),
    /// Compute a POD basis and singular-value rank report.
    Pod(cmds::PodArgs),
    /// Fit a model: pod, manifold-pod, or manifold-am.
    Train(cmds::TrainArgs),
    /// Evaluate stored models on the held-out test sets.
    Evaluate(cmds::EvaluateArgs),
    /// Fit and evaluate the full (r, p) error sweep.
    Sweep(cmds::SweepArgs),
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(raw) = std::env::var("POLYMANIFOLD_THREADS") {
        let n: usize = raw
            .trim()
            .parse()
            .with_context(|| format!("POLYMANIFOLD_THREADS must be a positive integer, got {raw:?}"))?;
        if n == 0 {
            anyhow::bail!("POLYMANIFOLD_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("worker pool initialization failed")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(err) = init_threads() {
        eprintln!("error: {err:#}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Generate(args) => cmds::generate(args),
        Command::Pod(args) => cmds::pod(args),
        Command::Train(args) => cmds::train(args),
        Command::Evaluate(args) => cmds::evaluate(args),
        Command::Sweep(args) => cmds::sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
