//! Class-weighted L2-regularized logistic regression.
//!
//! The trainer minimizes
//!
//!   J(w, b) = sum_i cw(y_i) * logloss(y_i, w.x_i + b) + (l2/2)*|w|^2
//!
//! by full-batch gradient descent with Armijo backtracking, where the
//! class weight cw(c) = N / (2 * N_c) rebalances the loss so each class
//! contributes half of the total regardless of prevalence. The bias is not
//! penalized. Training stops once the gradient norm per example drops to
//! `tol` or after `max_iter` steps, whichever comes first.

use serde::{Deserialize, Serialize};

use super::sparse::SparseVec;
use super::XaiError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L2 penalty strength on the weights (never on the bias).
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence threshold on ||gradient||2 / n_examples.
    pub tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { l2: 1.0, max_iter: 500, tol: 1e-6 }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), XaiError> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(XaiError::InvalidConfig(format!("l2 {} must be finite and >= 0", self.l2)));
        }
        if self.max_iter == 0 {
            return Err(XaiError::InvalidConfig("max_iter must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(XaiError::InvalidConfig(format!("tol {} must be positive", self.tol)));
        }
        Ok(())
    }
}

/// A trained linear scorer together with the feature means of its training
/// set, which later serve as the attribution background point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub background_means: Vec<f64>,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    /// Log-odds score w.x + b.
    pub fn margin(&self, x: &SparseVec) -> Result<f64, XaiError> {
        Ok(x.dot_dense(&self.weights)? + self.bias)
    }

    pub fn predict_proba(&self, x: &SparseVec) -> Result<f64, XaiError> {
        Ok(sigmoid(self.margin(x)?))
    }
}

/// How training ended, reported alongside the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub iterations: usize,
    pub final_loss: f64,
    /// ||gradient||2 / n_examples at exit.
    pub gradient_norm: f64,
    /// True when the tolerance was reached before the iteration cap.
    pub converged: bool,
}

/// Overflow-safe logistic function, exact about 0.5 at margin 0.
pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^t) without overflow for large |t|.
fn ln_1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

struct Problem<'a> {
    x: &'a [SparseVec],
    y: &'a [bool],
    /// Per-example class weight, resolved once up front.
    cw: Vec<f64>,
    l2: f64,
    dim: usize,
}

impl Problem<'_> {
    fn loss(&self, w: &[f64], b: f64) -> f64 {
        let mut total = 0.0;
        for ((xi, &yi), &cwi) in self.x.iter().zip(self.y).zip(&self.cw) {
            let m = xi.dot_dense(w).expect("dimension checked at setup") + b;
            // logloss(1, m) = ln(1+e^-m); logloss(0, m) = ln(1+e^m).
            let ll = if yi { ln_1p_exp(-m) } else { ln_1p_exp(m) };
            total += cwi * ll;
        }
        total + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Returns (gradient over weights, gradient over bias).
    fn gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let mut gw = vec![0.0; self.dim];
        let mut gb = 0.0;
        for ((xi, &yi), &cwi) in self.x.iter().zip(self.y).zip(&self.cw) {
            let m = xi.dot_dense(w).expect("dimension checked at setup") + b;
            let residual = cwi * (sigmoid(m) - if yi { 1.0 } else { 0.0 });
            for (j, v) in xi.iter() {
                gw[j] += residual * v;
            }
            gb += residual;
        }
        for (gj, wj) in gw.iter_mut().zip(w) {
            *gj += self.l2 * wj;
        }
        (gw, gb)
    }
}

pub fn train_logreg(
    x: &[SparseVec],
    y: &[bool],
    config: &TrainConfig,
) -> Result<(LinearModel, TrainDiagnostics), XaiError> {
    config.validate()?;
    if x.is_empty() {
        return Err(XaiError::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(XaiError::LengthMismatch { left: x.len(), right: y.len() });
    }
    let dim = x[0].dim();
    for xi in x {
        if xi.dim() != dim {
            return Err(XaiError::DimensionMismatch { expected: dim, got: xi.dim() });
        }
    }
    let n = x.len();
    let n_pos = y.iter().filter(|&&v| v).count();
    if n_pos == 0 || n_pos == n {
        return Err(XaiError::SingleClassInput);
    }
    let w_pos = n as f64 / (2.0 * n_pos as f64);
    let w_neg = n as f64 / (2.0 * (n - n_pos) as f64);
    let cw: Vec<f64> = y.iter().map(|&yi| if yi { w_pos } else { w_neg }).collect();

    let problem = Problem { x, y, cw, l2: config.l2, dim };
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut loss = problem.loss(&w, b);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut grad_per_example = f64::INFINITY;

    for _ in 0..config.max_iter {
        let (gw, gb) = problem.gradient(&w, b);
        let g_sq: f64 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        grad_per_example = g_sq.sqrt() / n as f64;
        if grad_per_example <= config.tol {
            break;
        }
        iterations += 1;

        // Armijo backtracking: shrink until the sufficient-decrease test
        // holds, then let the step grow again so flat stretches stay fast.
        const ARMIJO_C: f64 = 1e-4;
        let mut eta = step;
        loop {
            let w_try: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - eta * gi).collect();
            let b_try = b - eta * gb;
            let loss_try = problem.loss(&w_try, b_try);
            if loss_try <= loss - ARMIJO_C * eta * g_sq || eta < 1e-16 {
                w = w_try;
                b = b_try;
                loss = loss_try;
                break;
            }
            eta *= 0.5;
        }
        step = (eta * 2.0).min(1e6);
    }

    let mut means = vec![0.0; dim];
    for xi in x {
        for (j, v) in xi.iter() {
            means[j] += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }

    let converged = grad_per_example <= config.tol;
    Ok((
        LinearModel { weights: w, bias: b, background_means: means },
        TrainDiagnostics {
            iterations,
            final_loss: loss,
            gradient_norm: grad_per_example,
            converged,
        },
    ))
}
