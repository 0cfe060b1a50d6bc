//! Exact Shapley values for linear models.
//!
//! Under the feature-independence (interventional) reading, the Shapley
//! value of feature i for a linear scorer w.x + b collapses to the closed
//! form phi_i = w_i * (x_i - mu_i), with mu the background point. No
//! sampling is involved, so local accuracy
//!
//!   sum(phi) + base_value = w.x + b
//!
//! holds to floating-point precision. Attributions live in log-odds space,
//! where the closed form is exact; probabilities are not attributed.

use super::logreg::LinearModel;
use super::sparse::SparseVec;
use super::{Attribution, Scope, XaiError};

/// Per-feature contributions for one instance relative to the model's
/// background means. base_value is the score at the background point.
pub fn shap_linear(model: &LinearModel, x: &SparseVec) -> Result<Attribution, XaiError> {
    let d = model.n_features();
    if x.dim() != d {
        return Err(XaiError::DimensionMismatch { expected: d, got: x.dim() });
    }
    if model.background_means.len() != d {
        return Err(XaiError::DimensionMismatch { expected: d, got: model.background_means.len() });
    }
    let mut scores = Vec::with_capacity(d);
    for i in 0..d {
        scores.push(model.weights[i] * (x.get(i) - model.background_means[i]));
    }
    let base: f64 =
        model.weights.iter().zip(&model.background_means).map(|(w, m)| w * m).sum::<f64>()
            + model.bias;
    Ok(Attribution { scores, base_value: base, scope: Scope::Local })
}

/// Global importance: the mean of |phi_i| over all rows. Rows are sparse,
/// so each column is accumulated as its explicit entries plus an
/// `(n - nnz_i) * |mu_i|` term covering the implicit zeros, rather than by
/// materializing every local explanation.
pub fn mean_abs_shap(model: &LinearModel, xs: &[SparseVec]) -> Result<Attribution, XaiError> {
    if xs.is_empty() {
        return Err(XaiError::EmptyInput);
    }
    let d = model.n_features();
    if model.background_means.len() != d {
        return Err(XaiError::DimensionMismatch { expected: d, got: model.background_means.len() });
    }
    let mut abs_dev = vec![0.0; d];
    let mut nnz = vec![0usize; d];
    for x in xs {
        if x.dim() != d {
            return Err(XaiError::DimensionMismatch { expected: d, got: x.dim() });
        }
        for (i, v) in x.iter() {
            abs_dev[i] += (v - model.background_means[i]).abs();
            nnz[i] += 1;
        }
    }
    let n = xs.len() as f64;
    let mut scores = Vec::with_capacity(d);
    for i in 0..d {
        let zeros = (xs.len() - nnz[i]) as f64;
        let total = abs_dev[i] + zeros * model.background_means[i].abs();
        scores.push(model.weights[i].abs() * total / n);
    }
    let base: f64 =
        model.weights.iter().zip(&model.background_means).map(|(w, m)| w * m).sum::<f64>()
            + model.bias;
    Ok(Attribution { scores, base_value: base, scope: Scope::Global })
}
