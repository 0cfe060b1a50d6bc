//! Report rendering with fixed schemas.
//!
//! Every table kind has one column layout, numbers print with exactly three
//! decimals, and the sentinels are spelled out: an infinite ratio renders
//! as `∞` and an undefined quantity as `—`. The JSON form carries a `kind`
//! tag so a results file can be re-rendered later without guessing what it
//! contains. Markdown and CSV are projections of the same values; only the
//! layout differs.

use serde::{Deserialize, Serialize};

use crate::bridge::{BridgeReport, ParadigmSummary};
use crate::stats::{Ratio, StatsReport};

pub const INFINITY_CELL: &str = "\u{221e}";
pub const UNDEFINED_CELL: &str = "\u{2014}";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format {other:?}, expected markdown, csv, or json")),
        }
    }
}

/// A renderable result, tagged with its kind for later re-rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportDocument {
    Stats(StatsReport),
    Bridge(BridgeReport),
    Paradigm(ParadigmSummary),
}

impl ReportDocument {
    pub fn kind(&self) -> &'static str {
        match self {
            ReportDocument::Stats(_) => "stats",
            ReportDocument::Bridge(_) => "bridge",
            ReportDocument::Paradigm(_) => "paradigm",
        }
    }
}

pub fn render(doc: &ReportDocument, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(doc).expect("report serialization");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => match doc {
            ReportDocument::Stats(r) => stats_markdown(r),
            ReportDocument::Bridge(r) => bridge_markdown(r),
            ReportDocument::Paradigm(r) => paradigm_markdown(r),
        },
        ReportFormat::Csv => match doc {
            ReportDocument::Stats(r) => stats_csv(r),
            ReportDocument::Bridge(r) => bridge_csv(r),
            ReportDocument::Paradigm(r) => paradigm_csv(r),
        },
    }
}

fn f3(x: f64) -> String {
    format!("{x:.3}")
}

fn opt3(x: Option<f64>) -> String {
    match x {
        Some(v) => f3(v),
        None => UNDEFINED_CELL.to_string(),
    }
}

fn ratio_cell(r: &Ratio) -> String {
    match r {
        Ratio::Finite(v) => f3(*v),
        Ratio::Infinite => INFINITY_CELL.to_string(),
        Ratio::Undefined => UNDEFINED_CELL.to_string(),
    }
}

fn markdown_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str("| ");
    out.push_str(&header.join(" | "));
    out.push_str(" |\n|");
    for _ in header {
        out.push_str(" --- |");
    }
    out.push('\n');
    for row in rows {
        out.push_str("| ");
        out.push_str(&row.join(" | "));
        out.push_str(" |\n");
    }
    out
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    // Cells here are identifiers, digests, and formatted numbers; none can
    // contain a comma, quote, or newline, so no quoting layer is needed.
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert!(row.iter().all(|c| !c.contains([',', '"', '\n'])));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn stats_rows(r: &StatsReport) -> Vec<Vec<String>> {
    r.rows
        .iter()
        .map(|row| {
            vec![
                row.table.rubric.as_str().to_string(),
                row.table.a.to_string(),
                row.table.b.to_string(),
                row.table.c.to_string(),
                row.table.d.to_string(),
                f3(row.prevalence.p_flag_given_failure),
                f3(row.prevalence.p_flag_given_success),
                f3(row.prevalence.delta),
                ratio_cell(&row.prevalence.ratio),
                opt3(row.reliability.p_success_given_flag),
                opt3(row.reliability.p_success_given_noflag),
                opt3(row.reliability.delta),
                ratio_cell(&row.reliability.rr),
            ]
        })
        .collect()
}

fn stats_markdown(r: &StatsReport) -> String {
    let rows = stats_rows(r);
    let mut out = String::new();
    out.push_str("# Rubric flag statistics\n\n");
    out.push_str(&format!("- runs: {}\n- corpus: {}\n\n", r.n_runs, r.corpus_digest));

    out.push_str("## Violation prevalence by outcome\n\n");
    let prevalence: Vec<Vec<String>> =
        rows.iter().map(|row| row[..9].to_vec()).collect();
    out.push_str(&markdown_table(
        &[
            "rubric",
            "flagged failures",
            "clean failures",
            "flagged successes",
            "clean successes",
            "P(flag \\| failure)",
            "P(flag \\| success)",
            "gap",
            "ratio",
        ],
        &prevalence,
    ));
    let a = &r.annotations;
    out.push_str(&format!(
        "\nSmallest prevalence gap: {}; runner-up: {}; largest gap: {}.\n\n",
        name_or_dash(a.prevalence_best),
        name_or_dash(a.prevalence_second),
        name_or_dash(a.prevalence_worst),
    ));

    out.push_str("## Success rates conditioned on flags\n\n");
    let reliability: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut cells = vec![row[0].clone()];
            cells.extend_from_slice(&row[9..]);
            cells
        })
        .collect();
    out.push_str(&markdown_table(
        &[
            "rubric",
            "P(success \\| flag)",
            "P(success \\| clean)",
            "gap",
            "relative risk",
        ],
        &reliability,
    ));
    out.push_str(&format!(
        "\nLeast damaging flag: {}; runner-up: {}; most damaging: {}.\n",
        name_or_dash(a.reliability_best),
        name_or_dash(a.reliability_second),
        name_or_dash(a.reliability_worst),
    ));
    out
}

fn name_or_dash(rubric: Option<crate::judge::RubricId>) -> String {
    rubric.map_or_else(|| UNDEFINED_CELL.to_string(), |r| r.as_str().to_string())
}

fn stats_csv(r: &StatsReport) -> String {
    csv_table(
        &[
            "rubric",
            "flagged_failures",
            "clean_failures",
            "flagged_successes",
            "clean_successes",
            "p_flag_given_failure",
            "p_flag_given_success",
            "prevalence_gap",
            "prevalence_ratio",
            "p_success_given_flag",
            "p_success_given_clean",
            "reliability_gap",
            "relative_risk",
        ],
        &stats_rows(r),
    )
}

fn bridge_rows(r: &BridgeReport) -> Vec<Vec<String>> {
    r.ranking
        .iter()
        .enumerate()
        .map(|(i, rubric)| {
            let score = &r.scores[*rubric as usize];
            vec![
                (i + 1).to_string(),
                rubric.as_str().to_string(),
                f3(score.mean_abs_shap),
                f3(r.weights[*rubric as usize]),
            ]
        })
        .collect()
}

fn bridge_markdown(r: &BridgeReport) -> String {
    let mut out = String::new();
    out.push_str("# Success-surrogate attribution\n\n");
    out.push_str(&format!("- runs: {}\n- corpus: {}\n", r.n_runs, r.corpus_digest));
    out.push_str(&format!(
        "- surrogate: bias {}, {} iterations, final loss {}, {}\n\n",
        f3(r.bias),
        r.diagnostics.iterations,
        f3(r.diagnostics.final_loss),
        if r.diagnostics.converged { "converged" } else { "hit the iteration cap" },
    ));
    out.push_str(&markdown_table(
        &["rank", "rubric", "mean \\|SHAP\\|", "surrogate weight"],
        &bridge_rows(r),
    ));
    out
}

fn bridge_csv(r: &BridgeReport) -> String {
    csv_table(&["rank", "rubric", "mean_abs_shap", "surrogate_weight"], &bridge_rows(r))
}

fn paradigm_rows(r: &ParadigmSummary) -> Vec<Vec<String>> {
    r.rows
        .iter()
        .map(|row| {
            vec![
                row.rubric.as_str().to_string(),
                f3(row.mean_abs_shap),
                f3(row.delta_prev),
                ratio_cell(&row.rr),
            ]
        })
        .collect()
}

fn paradigm_markdown(r: &ParadigmSummary) -> String {
    let mut out = String::new();
    out.push_str("# Correlative vs diagnostic signals\n\n");
    out.push_str(&format!("- runs: {}\n- corpus: {}\n\n", r.n_runs, r.corpus_digest));
    out.push_str(&markdown_table(
        &["rubric", "mean \\|SHAP\\|", "prevalence gap", "relative risk"],
        &paradigm_rows(r),
    ));
    out
}

fn paradigm_csv(r: &ParadigmSummary) -> String {
    csv_table(&["rubric", "mean_abs_shap", "prevalence_gap", "relative_risk"], &paradigm_rows(r))
}
