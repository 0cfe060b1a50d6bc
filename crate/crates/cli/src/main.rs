//! Command-line front end for the tracelens pipelines.
//!
//! Each subcommand resolves its configuration with a fixed precedence
//! (flags, then config file, then environment, then defaults), prints the
//! effective values at startup, runs, and writes a `run.json` manifest next
//! to its outputs so any invocation can be audited and re-executed.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 transport error.

mod commands;
mod errors;
mod manifest;
mod resolve;
mod util;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Trace-grounded agent evaluation: corpus synthesis, rubric judging,
/// outcome statistics, explainers, and report rendering.
#[derive(Parser)]
#[command(name = "tracelens", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace corpus with known fault ground truth.
    Synth(commands::synth::SynthArgs),
    /// Flag rubric violations for every run in a corpus.
    Judge(commands::judge::JudgeArgs),
    /// Prevalence and reliability statistics over judged flags.
    Stats(commands::stats::StatsArgs),
    /// Text-classifier explanations: SHAP, LIME, PDP, and stability.
    #[command(name = "static-xai")]
    StaticXai(commands::static_xai::StaticXaiArgs),
    /// Train the success surrogate on rubric flags and attribute it.
    Bridge(commands::bridge::BridgeArgs),
    /// Build, validate, or describe explanation packets.
    Mep(commands::mep::MepArgs),
    /// Re-render a saved report into another format.
    Report(commands::report::ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Judge(args) => commands::judge::run(args),
        Command::Stats(args) => commands::stats::run(args),
        Command::StaticXai(args) => commands::static_xai::run(args),
        Command::Bridge(args) => commands::bridge::run(args),
        Command::Mep(args) => commands::mep::run(args),
        Command::Report(args) => commands::report::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
