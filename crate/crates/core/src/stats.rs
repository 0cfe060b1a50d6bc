//! Outcome-conditioned statistics over rubric flags.
//!
//! Everything here is exact counting: a 2x2 contingency table per rubric,
//! conditional probabilities read straight off the table, and their
//! differences and quotients. There is no smoothing and no clamping. When a
//! denominator is empty the quantity is *undefined* and stays undefined all
//! the way into the rendered report, where it prints as an em dash; a
//! positive quantity over a zero denominator is infinite and prints as the
//! infinity sign. Hiding either case behind an epsilon would invent signal
//! that is not in the data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{FlagMatrix, RubricId};
use crate::trace::run_set_digest;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("flag matrix has no rows")]
    EmptyMatrix,

    /// Prevalence conditions on the outcome, so both outcome classes must
    /// be present.
    #[error("flag matrix contains only one outcome class")]
    DegenerateOutcomeClass,
}

/// Exact 2x2 counts for one rubric:
///
/// |            | failure | success |
/// |------------|---------|---------|
/// | flag = 1   | a       | c       |
/// | flag = 0   | b       | d       |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub rubric: RubricId,
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    pub fn failures(&self) -> u64 {
        self.a + self.b
    }

    pub fn successes(&self) -> u64 {
        self.c + self.d
    }
}

/// A quotient of probabilities, which may overflow to infinity (positive
/// numerator over zero) or be undefined (zero over zero, or either side
/// itself undefined).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ratio {
    Finite(f64),
    Infinite,
    Undefined,
}

impl Ratio {
    /// Forms `num / den`, treating `None` operands as undefined.
    fn of(num: Option<f64>, den: Option<f64>) -> Ratio {
        match (num, den) {
            (Some(n), Some(d)) if d > 0.0 => Ratio::Finite(n / d),
            (Some(n), Some(_)) if n > 0.0 => Ratio::Infinite,
            (Some(_), Some(_)) => Ratio::Undefined,
            _ => Ratio::Undefined,
        }
    }

    pub fn as_finite(&self) -> Option<f64> {
        match self {
            Ratio::Finite(v) => Some(*v),
            _ => None,
        }
    }

    /// Descending importance order: infinite above every finite value;
    /// undefined sorts below everything (it never wins an annotation).
    fn rank_key(&self) -> (u8, f64) {
        match self {
            Ratio::Infinite => (2, 0.0),
            Ratio::Finite(v) => (1, *v),
            Ratio::Undefined => (0, 0.0),
        }
    }
}

/// How often a rubric fires, conditioned on the run's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceResult {
    pub rubric: RubricId,
    /// P(flag = 1 | failure) = a / (a + b)
    pub p_flag_given_failure: f64,
    /// P(flag = 1 | success) = c / (c + d)
    pub p_flag_given_success: f64,
    /// Difference of the two conditionals.
    pub delta: f64,
    /// Quotient of the two conditionals.
    pub ratio: Ratio,
}

/// How predictive a rubric's verdict is of the run's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityResult {
    pub rubric: RubricId,
    /// P(success | flag = 1) = c / (a + c); undefined when the rubric never
    /// fired.
    pub p_success_given_flag: Option<f64>,
    /// P(success | flag = 0) = d / (b + d); undefined when the rubric
    /// always fired.
    pub p_success_given_noflag: Option<f64>,
    pub delta: Option<f64>,
    /// Relative risk of success under a flag.
    pub rr: Ratio,
}

/// Counts one rubric's flags against outcomes.
pub fn build_contingency(m: &FlagMatrix, rubric: RubricId) -> Result<ContingencyTable, StatsError> {
    if m.n_runs() == 0 {
        return Err(StatsError::EmptyMatrix);
    }
    let mut t = ContingencyTable { rubric, a: 0, b: 0, c: 0, d: 0 };
    for row in m.rows() {
        let flagged = row.flags.is_violated(rubric);
        match (flagged, row.outcome.success) {
            (true, false) => t.a += 1,
            (false, false) => t.b += 1,
            (true, true) => t.c += 1,
            (false, true) => t.d += 1,
        }
    }
    Ok(t)
}

/// Flag prevalence conditioned on outcome. Requires both outcome classes.
pub fn prevalence(ct: &ContingencyTable) -> Result<PrevalenceResult, StatsError> {
    if ct.failures() == 0 || ct.successes() == 0 {
        return Err(StatsError::DegenerateOutcomeClass);
    }
    let p_fail = ct.a as f64 / ct.failures() as f64;
    let p_succ = ct.c as f64 / ct.successes() as f64;
    Ok(PrevalenceResult {
        rubric: ct.rubric,
        p_flag_given_failure: p_fail,
        p_flag_given_success: p_succ,
        delta: p_fail - p_succ,
        ratio: Ratio::of(Some(p_fail), Some(p_succ)),
    })
}

/// Success rates conditioned on the flag. Degenerate cells surface as
/// undefined values rather than errors.
pub fn reliability(ct: &ContingencyTable) -> ReliabilityResult {
    let p_flag = (ct.a + ct.c > 0).then(|| ct.c as f64 / (ct.a + ct.c) as f64);
    let p_noflag = (ct.b + ct.d > 0).then(|| ct.d as f64 / (ct.b + ct.d) as f64);
    ReliabilityResult {
        rubric: ct.rubric,
        p_success_given_flag: p_flag,
        p_success_given_noflag: p_noflag,
        delta: match (p_flag, p_noflag) {
            (Some(f), Some(n)) => Some(f - n),
            _ => None,
        },
        rr: Ratio::of(p_flag, p_noflag),
    }
}

/// One rubric's full row in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricStats {
    pub table: ContingencyTable,
    pub prevalence: PrevalenceResult,
    pub reliability: ReliabilityResult,
}

/// Which rubrics stand out on each axis. `best` prevalence is the *lowest*
/// delta (least failure-specific firing is the least alarming) and `best`
/// reliability is the *highest* relative risk. Ties break toward the
/// earlier rubric in canonical order; undefined values never place.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsAnnotations {
    pub prevalence_best: Option<RubricId>,
    pub prevalence_second: Option<RubricId>,
    pub prevalence_worst: Option<RubricId>,
    pub reliability_best: Option<RubricId>,
    pub reliability_second: Option<RubricId>,
    pub reliability_worst: Option<RubricId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_runs: usize,
    /// SHA-256 over the sorted run-id set; lets downstream joins verify
    /// they are talking about the same corpus.
    pub corpus_digest: String,
    /// One row per rubric, canonical order.
    pub rows: Vec<RubricStats>,
    pub annotations: StatsAnnotations,
}

/// Builds the full per-rubric report for one flag matrix.
pub fn stats_report(m: &FlagMatrix) -> Result<StatsReport, StatsError> {
    if m.n_runs() == 0 {
        return Err(StatsError::EmptyMatrix);
    }
    let mut rows = Vec::with_capacity(RubricId::ALL.len());
    for rubric in RubricId::ALL {
        let table = build_contingency(m, rubric)?;
        rows.push(RubricStats {
            table,
            prevalence: prevalence(&table)?,
            reliability: reliability(&table),
        });
    }

    // Annotation ties always resolve to the canonically earliest rubric.
    // The stable ascending/descending sorts give that for the top slots;
    // the worst slot needs a strict-improvement scan, because "last of a
    // stable sort" would hand ties to the canonically latest rubric.

    // Prevalence: small delta is good.
    let mut by_delta: Vec<&RubricStats> = rows.iter().collect();
    by_delta.sort_by(|x, y| x.prevalence.delta.partial_cmp(&y.prevalence.delta).unwrap());
    let prevalence_best = by_delta.first().map(|r| r.table.rubric);
    let prevalence_second = by_delta.get(1).map(|r| r.table.rubric);
    let mut prevalence_worst: Option<&RubricStats> = None;
    for r in &rows {
        if prevalence_worst.is_none_or(|w| r.prevalence.delta > w.prevalence.delta) {
            prevalence_worst = Some(r);
        }
    }
    let prevalence_worst = prevalence_worst.map(|r| r.table.rubric);

    // Reliability: high relative risk is good; undefined entries never
    // take an annotation.
    let defined: Vec<&RubricStats> = rows
        .iter()
        .filter(|r| !matches!(r.reliability.rr, Ratio::Undefined))
        .collect();
    let mut by_rr = defined.clone();
    by_rr.sort_by(|x, y| {
        let (kx, vx) = x.reliability.rr.rank_key();
        let (ky, vy) = y.reliability.rr.rank_key();
        ky.cmp(&kx).then_with(|| vy.partial_cmp(&vx).unwrap())
    });
    let reliability_best = by_rr.first().map(|r| r.table.rubric);
    let reliability_second = by_rr.get(1).map(|r| r.table.rubric);
    let mut reliability_worst: Option<&RubricStats> = None;
    for r in defined {
        if reliability_worst
            .is_none_or(|w| r.reliability.rr.rank_key() < w.reliability.rr.rank_key())
        {
            reliability_worst = Some(r);
        }
    }
    let reliability_worst = reliability_worst.map(|r| r.table.rubric);

    Ok(StatsReport {
        n_runs: m.n_runs(),
        corpus_digest: run_set_digest(m.run_ids()),
        rows,
        annotations: StatsAnnotations {
            prevalence_best,
            prevalence_second,
            prevalence_worst,
            reliability_best,
            reliability_second,
            reliability_worst,
        },
    })
}
