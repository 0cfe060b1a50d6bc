//! `tracelens bridge`: success surrogate over rubric flags, attributed
//! with exact linear SHAP, plus the side-by-side paradigm table.

use std::path::PathBuf;

use clap::Args;
use tracelens_core::bridge::{beeswarm_rows, paradigm_summary, run_bridge};
use tracelens_core::judge::RubricId;
use tracelens_core::report::ReportDocument;
use tracelens_core::stats::stats_report;
use tracelens_core::xai::logreg::TrainConfig;

use crate::errors::{usage, CliError};
use crate::manifest::RunManifest;
use crate::resolve::{pick, ConfigEcho};
use crate::util::{
    create_out_dir, join_matrix, parse_corpus, parse_flags, read_input, write_report,
    FormatChoice,
};

#[derive(Args)]
pub struct BridgeArgs {
    /// Trace corpus carrying the run outcomes.
    #[arg(long)]
    traces: PathBuf,
    /// Judged flags, one JSON object per line.
    #[arg(long)]
    flags: PathBuf,
    /// L2 penalty of the surrogate fit.
    #[arg(long)]
    l2: Option<f64>,
    /// Output format [default: all]
    #[arg(long, value_enum)]
    format: Option<FormatChoice>,
    /// Skip the per-run SHAP rows (beeswarm.json).
    #[arg(long)]
    no_beeswarm: bool,
    /// Directory for bridge.*, paradigm.*, beeswarm.json, and run.json.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: BridgeArgs) -> Result<(), CliError> {
    let l2 = pick(args.l2, None, None, TrainConfig::default().l2);
    if !(l2.value.is_finite() && l2.value >= 0.0) {
        return Err(usage(format!("--l2 {} must be finite and non-negative", l2.value)));
    }
    let train = TrainConfig { l2: l2.value, ..TrainConfig::default() };

    let format = pick(args.format, None, None, FormatChoice::All);
    let mut echo = ConfigEcho::new();
    echo.add("l2", &l2);
    echo.add("format", &format);
    echo.add_value(
        "beeswarm",
        !args.no_beeswarm,
        if args.no_beeswarm { "flag" } else { "default" },
    );
    echo.print("bridge");
    let format = format.value;

    let mut manifest = RunManifest::new(
        "bridge",
        serde_json::json!({
            "l2": train.l2,
            "max_iter": train.max_iter,
            "tol": train.tol,
            "format": format.to_string(),
            "beeswarm": !args.no_beeswarm,
        }),
    );
    let corpus_bytes = read_input(&mut manifest, &args.traces)?;
    let corpus = parse_corpus(&args.traces, &corpus_bytes)?;
    let flags_bytes = read_input(&mut manifest, &args.flags)?;
    let flags = parse_flags(&args.flags, &flags_bytes)?;
    let matrix = join_matrix(&corpus, flags)?;

    let report = run_bridge(&matrix, &train)?;
    let stats = stats_report(&matrix)?;
    let summary = paradigm_summary(&report, &stats)?;

    let top = report.ranking[0];
    println!(
        "top rubric by mean |SHAP|: {} ({:.3})",
        top,
        report.scores[top as usize].mean_abs_shap
    );

    create_out_dir(&args.out)?;
    if !args.no_beeswarm {
        let rows = beeswarm_rows(&matrix, &train)?;
        let doc = serde_json::json!({
            "kind": "beeswarm",
            "rubrics": RubricId::ALL.iter().map(|r| r.as_str()).collect::<Vec<_>>(),
            "rows": rows,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("beeswarm serialization");
        text.push('\n');
        manifest.write_output(&args.out, "beeswarm.json", text.as_bytes())?;
    }
    write_report(&mut manifest, &args.out, "bridge", &ReportDocument::Bridge(report), format)?;
    write_report(
        &mut manifest,
        &args.out,
        "paradigm",
        &ReportDocument::Paradigm(summary),
        format,
    )?;
    manifest.finish(&args.out)
}
