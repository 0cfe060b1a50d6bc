//! Partial dependence: marginal effect of one feature on a black-box score.

use super::sparse::SparseVec;
use super::XaiError;

/// For each grid value v, averages `predict_fn` over the dataset with
/// feature `j` forced to v in every row. The curve exposes the model's
/// marginal response; for a linear margin it is affine with slope w_j.
pub fn pdp<F>(
    predict_fn: F,
    xs: &[SparseVec],
    feature: usize,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>, XaiError>
where
    F: Fn(&SparseVec) -> f64,
{
    if xs.is_empty() || grid.is_empty() {
        return Err(XaiError::EmptyInput);
    }
    let dim = xs[0].dim();
    if feature >= dim {
        return Err(XaiError::DimensionMismatch { expected: dim, got: feature });
    }
    for x in xs {
        if x.dim() != dim {
            return Err(XaiError::DimensionMismatch { expected: dim, got: x.dim() });
        }
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(XaiError::NonFiniteInput);
    }
    let mut curve = Vec::with_capacity(grid.len());
    for &value in grid {
        let mut total = 0.0;
        for x in xs {
            let mut row = x.clone();
            row.set(feature, value);
            total += predict_fn(&row);
        }
        curve.push((value, total / xs.len() as f64));
    }
    Ok(curve)
}
