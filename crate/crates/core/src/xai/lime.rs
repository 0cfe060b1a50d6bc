//! Local surrogate explanations for a black-box scorer.
//!
//! The instance's active features are toggled by random binary masks; the
//! black box is queried on each masked variant; and a kernel-weighted
//! ridge regression in mask space approximates the scorer around the
//! instance. A surrogate coefficient estimates how much turning that
//! feature on (at its value in the instance) moves the prediction, so for
//! an exactly linear scorer the coefficient for feature j recovers
//! w_j * x_j.
//!
//! Sample weights use the exponential kernel exp(-D^2 / width^2) on the
//! cosine-style mask distance D = 1 - sqrt(kept / active). The first
//! sample is always the unmasked instance itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sparse::SparseVec;
use super::XaiError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    /// Maximum number of features to return (clipped to the active count).
    pub n_features: usize,
    /// Number of masked variants queried, including the unmasked one.
    pub n_samples: usize,
    pub seed: u64,
    /// Exponential kernel width; defaults to 0.75 * sqrt(active count).
    pub kernel_width: Option<f64>,
    /// Ridge penalty of the surrogate fit.
    pub ridge: f64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_features: 10,
            n_samples: 1000,
            seed: 42,
            kernel_width: None,
            ridge: 1.0,
        }
    }
}

impl LimeConfig {
    fn validate(&self) -> Result<(), XaiError> {
        if self.n_features == 0 {
            return Err(XaiError::InvalidConfig("n_features must be positive".into()));
        }
        if self.n_samples < 2 {
            return Err(XaiError::InvalidConfig("n_samples must be at least 2".into()));
        }
        if !(self.ridge > 0.0 && self.ridge.is_finite()) {
            return Err(XaiError::InvalidConfig(format!(
                "ridge {} must be finite and positive",
                self.ridge
            )));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(XaiError::InvalidConfig(format!(
                    "kernel_width {w} must be finite and positive"
                )));
            }
        }
        Ok(())
    }
}

/// Signed local surrogate weights, largest |weight| first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeExplanation {
    /// (feature column, surrogate weight), sorted by |weight| descending,
    /// ties by column.
    pub features: Vec<(usize, f64)>,
    pub intercept: f64,
}

pub fn lime_explain<F>(
    predict_fn: F,
    instance: &SparseVec,
    config: &LimeConfig,
) -> Result<LimeExplanation, XaiError>
where
    F: Fn(&SparseVec) -> f64,
{
    config.validate()?;
    let active: Vec<usize> = instance.active_indices().to_vec();
    let m = active.len();
    if m == 0 {
        return Err(XaiError::DegenerateInstance);
    }
    let width = config.kernel_width.unwrap_or(0.75 * (m as f64).sqrt());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut masks: Vec<Vec<bool>> = Vec::with_capacity(config.n_samples);
    masks.push(vec![true; m]);
    for _ in 1..config.n_samples {
        masks.push((0..m).map(|_| rng.random::<bool>()).collect());
    }

    let mut targets = Vec::with_capacity(masks.len());
    let mut weights = Vec::with_capacity(masks.len());
    for mask in &masks {
        let mut variant = instance.clone();
        let mut kept = 0usize;
        for (pos, &column) in active.iter().enumerate() {
            if mask[pos] {
                kept += 1;
            } else {
                variant.set(column, 0.0);
            }
        }
        targets.push(predict_fn(&variant));
        let distance = 1.0 - (kept as f64 / m as f64).sqrt();
        weights.push((-(distance * distance) / (width * width)).exp());
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(XaiError::NonFiniteInput);
    }

    let beta = weighted_ridge(&masks, &targets, &weights, config.ridge)?;
    let mut features: Vec<(usize, f64)> =
        active.iter().copied().zip(beta.coefficients).collect();
    features.sort_by(|x, y| {
        y.1.abs().partial_cmp(&x.1.abs()).unwrap().then(x.0.cmp(&y.0))
    });
    features.truncate(config.n_features);
    Ok(LimeExplanation { features, intercept: beta.intercept })
}

struct RidgeFit {
    coefficients: Vec<f64>,
    intercept: f64,
}

/// Solves min_beta sum_i pi_i (y_i - b0 - z_i.beta)^2 + alpha |beta|^2 with
/// an unpenalized intercept, via weighted centering and a Cholesky solve of
/// the (m x m) normal equations.
fn weighted_ridge(
    masks: &[Vec<bool>],
    y: &[f64],
    pi: &[f64],
    alpha: f64,
) -> Result<RidgeFit, XaiError> {
    let m = masks[0].len();
    let pi_total: f64 = pi.iter().sum();

    let mut z_mean = vec![0.0; m];
    let mut y_mean = 0.0;
    for ((mask, &yi), &w) in masks.iter().zip(y).zip(pi) {
        for (j, &on) in mask.iter().enumerate() {
            if on {
                z_mean[j] += w;
            }
        }
        y_mean += w * yi;
    }
    for zj in &mut z_mean {
        *zj /= pi_total;
    }
    y_mean /= pi_total;

    // Normal equations on centered data: (Zc' W Zc + alpha I) beta = Zc' W yc.
    let mut a = vec![vec![0.0; m]; m];
    let mut rhs = vec![0.0; m];
    for ((mask, &yi), &w) in masks.iter().zip(y).zip(pi) {
        let zc: Vec<f64> =
            mask.iter().enumerate().map(|(j, &on)| (on as u8) as f64 - z_mean[j]).collect();
        let yc = yi - y_mean;
        for j in 0..m {
            let wz = w * zc[j];
            rhs[j] += wz * yc;
            for l in j..m {
                a[j][l] += wz * zc[l];
            }
        }
    }
    for j in 0..m {
        a[j][j] += alpha;
        for l in 0..j {
            a[j][l] = a[l][j];
        }
    }

    let coefficients = cholesky_solve(&mut a, rhs)?;
    let shift: f64 = coefficients.iter().zip(&z_mean).map(|(b, z)| b * z).sum();
    Ok(RidgeFit { intercept: y_mean - shift, coefficients })
}

/// In-place Cholesky factorization and solve for a symmetric
/// positive-definite system. The ridge term guarantees positive pivots.
fn cholesky_solve(a: &mut [Vec<f64>], mut b: Vec<f64>) -> Result<Vec<f64>, XaiError> {
    let n = b.len();
    for j in 0..n {
        let mut pivot = a[j][j];
        for l in 0..j {
            pivot -= a[j][l] * a[j][l];
        }
        if pivot <= 0.0 || !pivot.is_finite() {
            return Err(XaiError::NonFiniteInput);
        }
        a[j][j] = pivot.sqrt();
        for i in (j + 1)..n {
            let mut v = a[i][j];
            for l in 0..j {
                v -= a[i][l] * a[j][l];
            }
            a[i][j] = v / a[j][j];
        }
    }
    for i in 0..n {
        for l in 0..i {
            b[i] -= a[i][l] * b[l];
        }
        b[i] /= a[i][i];
    }
    for i in (0..n).rev() {
        for l in (i + 1)..n {
            b[i] -= a[l][i] * b[l];
        }
        b[i] /= a[i][i];
    }
    Ok(b)
}
