//! Explanation stability: does the story survive a nudge?
//!
//! An explanation method is stable when small input perturbations (or a
//! retrained model) leave its feature ranking roughly intact. The score
//! here is the mean tie-aware rank correlation between each instance's
//! original top-k feature ranking and the ranking after a perturbation,
//! averaged over every (instance, draw) pair. Pairs whose correlation is
//! undefined (constant rankings) are excluded from the mean and counted.
//!
//! Top-k sets may differ between the two explanations, so the correlation
//! is computed over the union of both sets: features present in one side's
//! top k keep their rank there, and features absent from a side are tied
//! behind its top k at the average of the leftover positions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sparse::SparseVec;
use super::spearman::spearman_rho;
use super::XaiError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// No change; a deterministic explainer must score exactly 1.0.
    Identity,
    /// Zeroes each active coordinate independently with the given
    /// probability, then rescales to the original L2 norm.
    TokenDropout { rate: f64 },
    /// Explanations recomputed by a model refit on resampled data; handled
    /// by [`stability_score_bootstrap`].
    BootstrapRetrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    /// Number of top features compared per explanation.
    pub k: usize,
    /// Perturbation draws per instance.
    pub n_perturb: usize,
    pub perturbation: Perturbation,
    pub seed: u64,
}

impl StabilityConfig {
    fn validate(&self) -> Result<(), XaiError> {
        if self.k == 0 {
            return Err(XaiError::InvalidConfig("k must be at least 1".into()));
        }
        if self.n_perturb == 0 {
            return Err(XaiError::InvalidConfig("n_perturb must be at least 1".into()));
        }
        if let Perturbation::TokenDropout { rate } = self.perturbation {
            if !(rate > 0.0 && rate < 1.0) {
                return Err(XaiError::InvalidConfig(format!(
                    "dropout rate {rate} must lie strictly between 0 and 1"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of a stability evaluation. `mean_rho` is `None` when every pair
/// was skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityScore {
    pub mean_rho: Option<f64>,
    /// Pairs whose correlation entered the mean.
    pub evaluated: usize,
    /// Pairs dropped because the correlation was undefined.
    pub skipped: usize,
}

/// Indices of the k largest-|score| features, best first, ties broken by
/// lower index.
fn top_k_by_magnitude(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j].abs().partial_cmp(&scores[i].abs()).unwrap().then(i.cmp(&j))
    });
    order.truncate(k);
    order
}

/// Rank correlation of two explanations restricted to the union of their
/// top-k feature sets. `Ok(None)` when the correlation is undefined, e.g.
/// for k=1 with agreeing top features.
pub fn topk_union_rho(a: &[f64], b: &[f64], k: usize) -> Result<Option<f64>, XaiError> {
    if a.len() != b.len() {
        return Err(XaiError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(XaiError::EmptyInput);
    }
    if k > a.len() {
        return Err(XaiError::InvalidConfig(format!(
            "k {k} exceeds the feature count {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(XaiError::NonFiniteInput);
    }
    let top_a = top_k_by_magnitude(a, k);
    let top_b = top_k_by_magnitude(b, k);
    let mut union: Vec<usize> = top_a.iter().chain(&top_b).copied().collect();
    union.sort_unstable();
    union.dedup();

    let ranks_over = |top: &[usize]| -> Vec<f64> {
        // Features beyond this side's top k share the leftover positions
        // k+1..=union.len() equally.
        let absent_rank = (top.len() + 1 + union.len()) as f64 / 2.0;
        union
            .iter()
            .map(|f| match top.iter().position(|t| t == f) {
                Some(pos) => (pos + 1) as f64,
                None => absent_rank,
            })
            .collect()
    };
    spearman_rho(&ranks_over(&top_a), &ranks_over(&top_b))
}

fn pair_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn apply_dropout(x: &SparseVec, rate: f64, rng: &mut ChaCha8Rng) -> SparseVec {
    let mut out = x.clone();
    for &i in x.active_indices() {
        if rng.random_bool(rate) {
            out.set(i, 0.0);
        }
    }
    let norm = out.l2_norm();
    if norm > 0.0 {
        out.scale(x.l2_norm() / norm);
    }
    out
}

/// Mean top-k rank correlation between original and perturbed explanations
/// over all (instance, draw) pairs. Draw d of instance i uses RNG stream
/// `i * n_perturb + d`, so results are independent of evaluation order.
pub fn stability_score<E>(
    mut explain_fn: E,
    instances: &[SparseVec],
    cfg: &StabilityConfig,
) -> Result<StabilityScore, XaiError>
where
    E: FnMut(&SparseVec) -> Vec<f64>,
{
    cfg.validate()?;
    if instances.is_empty() {
        return Err(XaiError::EmptyInput);
    }
    if matches!(cfg.perturbation, Perturbation::BootstrapRetrain) {
        return Err(XaiError::InvalidConfig(
            "bootstrap_retrain requires stability_score_bootstrap with a refit hook".into(),
        ));
    }
    let mut sum = 0.0;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for (i, x) in instances.iter().enumerate() {
        let base = explain_fn(x);
        for d in 0..cfg.n_perturb {
            let mut rng = pair_rng(cfg.seed, (i * cfg.n_perturb + d) as u64);
            let perturbed = match cfg.perturbation {
                Perturbation::Identity => x.clone(),
                Perturbation::TokenDropout { rate } => apply_dropout(x, rate, &mut rng),
                Perturbation::BootstrapRetrain => unreachable!("rejected above"),
            };
            match topk_union_rho(&base, &explain_fn(&perturbed), cfg.k)? {
                Some(rho) => {
                    sum += rho;
                    evaluated += 1;
                }
                None => skipped += 1,
            }
        }
    }
    Ok(StabilityScore {
        mean_rho: (evaluated > 0).then(|| sum / evaluated as f64),
        evaluated,
        skipped,
    })
}

/// Bootstrap-retrain variant: draw d calls `refit` once with RNG stream d
/// (for resampling the training set), then compares every instance's base
/// explanation against the refit model's.
pub fn stability_score_bootstrap<B, R, E>(
    mut base_explain: B,
    mut refit: R,
    instances: &[SparseVec],
    cfg: &StabilityConfig,
) -> Result<StabilityScore, XaiError>
where
    B: FnMut(&SparseVec) -> Vec<f64>,
    R: FnMut(&mut ChaCha8Rng) -> E,
    E: Fn(&SparseVec) -> Vec<f64>,
{
    cfg.validate()?;
    if instances.is_empty() {
        return Err(XaiError::EmptyInput);
    }
    if !matches!(cfg.perturbation, Perturbation::BootstrapRetrain) {
        return Err(XaiError::InvalidConfig(
            "stability_score_bootstrap only handles bootstrap_retrain".into(),
        ));
    }
    let bases: Vec<Vec<f64>> = instances.iter().map(&mut base_explain).collect();
    let mut sum = 0.0;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for d in 0..cfg.n_perturb {
        let mut rng = pair_rng(cfg.seed, d as u64);
        let explain = refit(&mut rng);
        for (base, x) in bases.iter().zip(instances) {
            match topk_union_rho(base, &explain(x), cfg.k)? {
                Some(rho) => {
                    sum += rho;
                    evaluated += 1;
                }
                None => skipped += 1,
            }
        }
    }
    Ok(StabilityScore {
        mean_rho: (evaluated > 0).then(|| sum / evaluated as f64),
        evaluated,
        skipped,
    })
}
