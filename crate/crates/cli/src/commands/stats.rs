//! `tracelens stats`: prevalence and reliability tables over judged flags.

use std::path::PathBuf;

use clap::Args;
use tracelens_core::report::ReportDocument;
use tracelens_core::stats::stats_report;

use crate::errors::CliError;
use crate::manifest::RunManifest;
use crate::resolve::{pick, ConfigEcho};
use crate::util::{
    create_out_dir, join_matrix, parse_corpus, parse_flags, read_input, write_report,
    FormatChoice,
};

#[derive(Args)]
pub struct StatsArgs {
    /// Trace corpus carrying the run outcomes.
    #[arg(long)]
    traces: PathBuf,
    /// Judged flags, one JSON object per line.
    #[arg(long)]
    flags: PathBuf,
    /// Output format [default: all]
    #[arg(long, value_enum)]
    format: Option<FormatChoice>,
    /// Directory for stats.{md,csv,json} and run.json.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: StatsArgs) -> Result<(), CliError> {
    let format = pick(args.format, None, None, FormatChoice::All);
    let mut echo = ConfigEcho::new();
    echo.add("format", &format);
    echo.print("stats");
    let format = format.value;

    let mut manifest = RunManifest::new(
        "stats",
        serde_json::json!({ "format": format.to_string() }),
    );
    let corpus_bytes = read_input(&mut manifest, &args.traces)?;
    let corpus = parse_corpus(&args.traces, &corpus_bytes)?;
    let flags_bytes = read_input(&mut manifest, &args.flags)?;
    let flags = parse_flags(&args.flags, &flags_bytes)?;

    let matrix = join_matrix(&corpus, flags)?;
    let report = stats_report(&matrix)?;
    println!("{} runs, corpus digest {}", report.n_runs, report.corpus_digest);

    create_out_dir(&args.out)?;
    write_report(&mut manifest, &args.out, "stats", &ReportDocument::Stats(report), format)?;
    manifest.finish(&args.out)
}
