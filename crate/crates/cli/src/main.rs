//! `rac`: batch front end for parsing completions, shaping rewards,
//! evaluating calibration, corrupting images and running the toy trainer.
//!
//! Exit codes: 0 success, 1 validation, 2 I/O, 3 numeric failure.

mod args;
mod corrupt;
mod eval;
mod io;
mod parse;
mod shape;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rac_core::Result;

#[derive(Debug, Parser)]
#[command(name = "rac", version, about = "Calibration-aware reward shaping tools")]
struct Cli {
    /// Base seed; falls back to RAC_SEED, then 0.
    #[arg(long, global = true, env = "RAC_SEED")]
    seed: Option<u64>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse raw completions into scored rollouts.
    Parse(parse::ParseArgs),
    /// Compute shaped rewards and group advantages for complete rollout groups.
    Shape(shape::ShapeArgs),
    /// Accuracy, Brier and ECE per benchmark, severity and band.
    Eval(eval::EvalArgs),
    /// Build clean/corrupted image pairs from a sample manifest.
    Corrupt(corrupt::CorruptArgs),
    /// Train the synthetic policy and report calibration.
    Simulate(simulate::SimulateArgs),
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Parse(a) => {
            let failed = parse::run(a, cli.force)?;
            Ok(if failed > 0 { 1 } else { 0 })
        }
        Command::Shape(a) => {
            let summary = shape::run(a, cli.force)?;
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            Ok(0)
        }
        Command::Eval(a) => {
            let report = eval::run(a, cli.force)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            Ok(0)
        }
        Command::Corrupt(a) => {
            let outcome = corrupt::run(a, cli.seed.unwrap_or(0), cli.force)?;
            println!("{} pairs written to {}", outcome.pairs, a.out.display());
            Ok(outcome.failure_code.map_or(0, |c| c as u8))
        }
        Command::Simulate(a) => {
            print!("{}", simulate::run(a, cli.seed, cli.force)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
