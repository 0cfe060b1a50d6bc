//! Rubric flags as features of a success model.
//!
//! Each judged run becomes a six-column binary row (1 = rubric violated,
//! canonical column order) labeled with its outcome (1 = success). A
//! class-weighted logistic regression learns to predict the label, and the
//! exact linear attribution machinery then says which rubric moves that
//! prediction most, as a global mean-|SHAP| ranking.
//!
//! These scores are correlative: they describe the trained surrogate, not
//! causal effect on the agent. [`paradigm_summary`] therefore places them
//! next to the outcome-conditioned diagnostics computed on the same corpus
//! so the two readings can be compared row by row.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{FlagMatrix, RubricId};
use crate::stats::{StatsError, StatsReport};
use crate::trace::run_set_digest;
use crate::xai::logreg::{train_logreg, TrainConfig, TrainDiagnostics};
use crate::xai::shap::{mean_abs_shap, shap_linear};
use crate::xai::sparse::SparseVec;
use crate::xai::{Attribution, XaiError};

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error(transparent)]
    Stats(#[from] StatsError),

    #[error("surrogate training failed: {0}")]
    Train(#[from] XaiError),

    #[error("reports were computed on different run sets")]
    CorpusMismatch,
}

/// Runs encoded as rows over the six rubric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RubricDesignMatrix {
    /// One sparse row per run, canonical rubric column order, 1 = violation.
    pub rows: Vec<SparseVec>,
    /// 1 = the run succeeded.
    pub labels: Vec<bool>,
    pub run_ids: Vec<String>,
}

pub fn flags_to_features(m: &FlagMatrix) -> Result<RubricDesignMatrix, BridgeError> {
    if m.n_runs() == 0 {
        return Err(StatsError::EmptyMatrix.into());
    }
    let mut rows = Vec::with_capacity(m.n_runs());
    let mut labels = Vec::with_capacity(m.n_runs());
    let mut run_ids = Vec::with_capacity(m.n_runs());
    for row in m.rows() {
        let mut x = SparseVec::zeros(RubricId::ALL.len());
        for (column, rubric) in RubricId::ALL.iter().enumerate() {
            if row.flags.is_violated(*rubric) {
                x.set(column, 1.0);
            }
        }
        rows.push(x);
        labels.push(row.outcome.success);
        run_ids.push(row.flags.run_id.clone());
    }
    Ok(RubricDesignMatrix { rows, labels, run_ids })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RubricScore {
    pub rubric: RubricId,
    pub mean_abs_shap: f64,
}

/// Global attribution of the success surrogate over one judged corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeReport {
    pub n_runs: usize,
    /// Digest of the sorted run-id set, for pairing with a stats report.
    pub corpus_digest: String,
    /// Canonical rubric order.
    pub scores: Vec<RubricScore>,
    /// Rubrics sorted by descending score, ties in canonical order.
    pub ranking: Vec<RubricId>,
    pub diagnostics: TrainDiagnostics,
    /// Surrogate weight per rubric (canonical order); positive pushes
    /// toward success under the 1=violation encoding.
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub fn run_bridge(m: &FlagMatrix, config: &TrainConfig) -> Result<BridgeReport, BridgeError> {
    let design = flags_to_features(m)?;
    let successes = design.labels.iter().filter(|&&s| s).count();
    if successes == 0 || successes == design.labels.len() {
        return Err(StatsError::DegenerateOutcomeClass.into());
    }
    let (model, diagnostics) = train_logreg(&design.rows, &design.labels, config)?;
    let attribution = mean_abs_shap(&model, &design.rows)?;

    let scores: Vec<RubricScore> = RubricId::ALL
        .iter()
        .zip(&attribution.scores)
        .map(|(&rubric, &s)| RubricScore { rubric, mean_abs_shap: s })
        .collect();
    let mut ranking: Vec<RubricId> = RubricId::ALL.to_vec();
    // Stable sort: equal scores keep the canonical order they started in.
    ranking.sort_by(|x, y| {
        let sx = scores[*x as usize].mean_abs_shap;
        let sy = scores[*y as usize].mean_abs_shap;
        sy.partial_cmp(&sx).unwrap()
    });

    Ok(BridgeReport {
        n_runs: m.n_runs(),
        corpus_digest: run_set_digest(m.run_ids()),
        scores,
        ranking,
        diagnostics,
        weights: model.weights,
        bias: model.bias,
    })
}

/// One run's local attributions, for beeswarm-style plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmRow {
    pub run_id: String,
    pub success: bool,
    /// Per-rubric SHAP value in canonical order.
    pub shap: Vec<f64>,
    /// The raw flag values, so plots can color by feature value.
    pub flags: Vec<u8>,
}

/// Per-run local SHAP values of the trained surrogate. Retrains with the
/// same config as [`run_bridge`], so rows reconcile with its global scores.
pub fn beeswarm_rows(
    m: &FlagMatrix,
    config: &TrainConfig,
) -> Result<Vec<BeeswarmRow>, BridgeError> {
    let design = flags_to_features(m)?;
    let successes = design.labels.iter().filter(|&&s| s).count();
    if successes == 0 || successes == design.labels.len() {
        return Err(StatsError::DegenerateOutcomeClass.into());
    }
    let (model, _) = train_logreg(&design.rows, &design.labels, config)?;
    let mut out = Vec::with_capacity(design.rows.len());
    for ((x, label), run_id) in design.rows.iter().zip(&design.labels).zip(&design.run_ids) {
        let local: Attribution = shap_linear(&model, x)?;
        out.push(BeeswarmRow {
            run_id: run_id.clone(),
            success: *label,
            shap: local.scores,
            flags: (0..RubricId::ALL.len()).map(|i| x.get(i) as u8).collect(),
        });
    }
    Ok(out)
}

/// One rubric's correlative and diagnostic signals side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParadigmRow {
    pub rubric: RubricId,
    pub mean_abs_shap: f64,
    /// Prevalence gap: P(flag | failure) - P(flag | success).
    pub delta_prev: f64,
    /// Relative risk of success given the flag.
    pub rr: crate::stats::Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParadigmSummary {
    pub n_runs: usize,
    pub corpus_digest: String,
    /// Canonical rubric order.
    pub rows: Vec<ParadigmRow>,
}

/// Joins a bridge report with a stats report computed on the same runs.
pub fn paradigm_summary(
    bridge: &BridgeReport,
    stats: &StatsReport,
) -> Result<ParadigmSummary, BridgeError> {
    if bridge.corpus_digest != stats.corpus_digest {
        return Err(BridgeError::CorpusMismatch);
    }
    let rows = bridge
        .scores
        .iter()
        .zip(&stats.rows)
        .map(|(score, stat)| {
            debug_assert_eq!(score.rubric, stat.table.rubric);
            ParadigmRow {
                rubric: score.rubric,
                mean_abs_shap: score.mean_abs_shap,
                delta_prev: stat.prevalence.delta,
                rr: stat.reliability.rr,
            }
        })
        .collect();
    Ok(ParadigmSummary {
        n_runs: bridge.n_runs,
        corpus_digest: bridge.corpus_digest.clone(),
        rows,
    })
}
