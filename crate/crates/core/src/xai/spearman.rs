//! Tie-aware Spearman rank correlation.
//!
//! Ranks are 1-based with ties assigned the average of the positions they
//! occupy, then correlated with Pearson's formula. With no ties this equals
//! the classic `1 - 6*sum(d^2) / (n(n^2-1))` shortcut. The correlation of a
//! constant ranking is undefined and reported as `Ok(None)`, never coerced
//! to zero: a caller averaging stability scores must know which pairs
//! carried no information.

use super::XaiError;

/// 1-based average ranks. `[10.0, 20.0, 20.0, 30.0]` ranks as
/// `[1.0, 2.5, 2.5, 4.0]`.
pub fn average_ranks(values: &[f64]) -> Result<Vec<f64>, XaiError> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(XaiError::NonFiniteInput);
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions are 1-based; a tie group spanning positions
        // start+1..=end shares their mean.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    Ok(ranks)
}

/// Spearman's rho between two equally long, non-empty score lists.
/// `Ok(None)` when either list is constant (zero rank variance).
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<Option<f64>, XaiError> {
    if a.len() != b.len() {
        return Err(XaiError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(XaiError::EmptyInput);
    }
    let ra = average_ranks(a)?;
    let rb = average_ranks(b)?;
    let n = ra.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        let dx = x - mean;
        let dy = y - mean;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(None);
    }
    // Single square root of the product keeps rho(x, x) at exactly 1.0 for
    // the rank magnitudes that occur in practice.
    Ok(Some(cov / (var_a * var_b).sqrt()))
}
