//! `tracelens report`: re-render a saved report document.
//!
//! Every analysis subcommand writes its tables as kind-tagged JSON next to
//! the human-readable forms. This command reads that JSON back and renders
//! it again, so formats can be regenerated without re-running the analysis.

use std::path::PathBuf;

use clap::Args;
use tracelens_core::report::ReportDocument;

use crate::errors::{data, CliError};
use crate::manifest::RunManifest;
use crate::resolve::{pick, ConfigEcho};
use crate::util::{create_out_dir, read_input, write_report, FormatChoice};

#[derive(Args)]
pub struct ReportArgs {
    /// Kind-tagged report JSON produced by stats or bridge.
    #[arg(long)]
    input: PathBuf,

    /// Output format [default: all]
    #[arg(long, value_enum)]
    format: Option<FormatChoice>,

    /// Directory for the rendered report and run.json.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: ReportArgs) -> Result<(), CliError> {
    let format = pick(args.format, None, None, FormatChoice::All);
    let mut echo = ConfigEcho::new();
    echo.add_value("input", args.input.display(), "flag");
    echo.add("format", &format);
    echo.print("report");
    let format = format.value;

    let mut manifest = RunManifest::new(
        "report",
        serde_json::json!({
            "input": args.input.display().to_string(),
            "format": format.to_string(),
        }),
    );

    let bytes = read_input(&mut manifest, &args.input)?;
    let doc: ReportDocument = serde_json::from_slice(&bytes)
        .map_err(|e| data(format!("{}: {e}", args.input.display())))?;

    create_out_dir(&args.out)?;
    write_report(&mut manifest, &args.out, "report", &doc, format)?;
    println!("rendered {} report", doc.kind());
    manifest.finish(&args.out)
}
