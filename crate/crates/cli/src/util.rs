//! Shared input plumbing for the subcommands.

use std::collections::BTreeMap;
use std::path::Path;

use tracelens_core::judge::{aggregate, FlagMatrix, FlagVector};
use tracelens_core::report::{render, ReportDocument, ReportFormat};
use tracelens_core::trace::{parse_trace_corpus, Outcome, Trajectory};

use crate::errors::{data, io_err, CliError};
use crate::manifest::RunManifest;

/// Reads a file whole and records it as a manifest input.
pub fn read_input(manifest: &mut RunManifest, path: &Path) -> Result<Vec<u8>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    manifest.record_input(path, &bytes);
    Ok(bytes)
}

pub fn parse_corpus(path: &Path, bytes: &[u8]) -> Result<Vec<Trajectory>, CliError> {
    parse_trace_corpus(bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// Parses a flags file: one flag-vector JSON object per line.
pub fn parse_flags(path: &Path, bytes: &[u8]) -> Result<Vec<FlagVector>, CliError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| data(format!("{}: not UTF-8: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let flags: FlagVector = serde_json::from_str(line)
            .map_err(|e| data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(flags);
    }
    if out.is_empty() {
        return Err(data(format!("{}: no flag vectors", path.display())));
    }
    Ok(out)
}

/// Joins flag vectors with the outcomes recorded in the corpus.
pub fn join_matrix(
    corpus: &[Trajectory],
    flags: Vec<FlagVector>,
) -> Result<FlagMatrix, CliError> {
    let outcomes: BTreeMap<String, Outcome> =
        corpus.iter().map(|t| (t.run_id.clone(), t.outcome.clone())).collect();
    aggregate(flags, &outcomes).map_err(CliError::from)
}

pub fn create_out_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Which rendered forms a report-producing subcommand writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FormatChoice {
    Markdown,
    Csv,
    Json,
    All,
}

impl std::fmt::Display for FormatChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FormatChoice::Markdown => "markdown",
            FormatChoice::Csv => "csv",
            FormatChoice::Json => "json",
            FormatChoice::All => "all",
        })
    }
}

/// Renders `doc` into every selected format as `<stem>.<ext>`.
pub fn write_report(
    manifest: &mut RunManifest,
    out_dir: &Path,
    stem: &str,
    doc: &ReportDocument,
    choice: FormatChoice,
) -> Result<(), CliError> {
    let all = [
        (FormatChoice::Markdown, ReportFormat::Markdown, "md"),
        (FormatChoice::Csv, ReportFormat::Csv, "csv"),
        (FormatChoice::Json, ReportFormat::Json, "json"),
    ];
    for (selector, format, ext) in all {
        if choice == FormatChoice::All || choice == selector {
            let text = render(doc, format);
            manifest.write_output(out_dir, &format!("{stem}.{ext}"), text.as_bytes())?;
        }
    }
    Ok(())
}
