//! Text classification pipeline and post-hoc explainers, from scratch.
//!
//! The pieces compose into the usual workflow: [`tfidf`] turns text into
//! L2-normalized sparse vectors, [`logreg`] fits a class-weighted linear
//! model, and the explainers read that model back out: [`shap`] gives exact
//! additive attributions for linear models, [`lime`] fits a local surrogate
//! that needs nothing but a predict function, [`pdp`] traces marginal
//! response curves, and [`stability`] quantifies how much explanations move
//! under input perturbation, using the tie-aware rank correlation in
//! [`spearman`].

pub mod lime;
pub mod logreg;
pub mod pdp;
pub mod pipeline;
pub mod shap;
pub mod sparse;
pub mod spearman;
pub mod stability;
pub mod tfidf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum XaiError {
    #[error("no vocabulary term survived the document-frequency filters")]
    EmptyVocabulary,

    #[error("training data contains a single outcome class")]
    SingleClassInput,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("instance has no active features")]
    DegenerateInstance,

    #[error("input contains a non-finite value")]
    NonFiniteInput,

    #[error("empty input")]
    EmptyInput,

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Explains one prediction.
    Local,
    /// Summarizes a model over a corpus.
    Global,
}

/// Additive feature attributions in the model's margin (log-odds) space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// One score per feature column.
    pub scores: Vec<f64>,
    /// The attribution baseline: the margin at the background point.
    pub base_value: f64,
    pub scope: Scope,
}
