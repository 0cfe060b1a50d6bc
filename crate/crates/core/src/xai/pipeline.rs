//! Fitted text-classification pipeline with a versioned on-disk form.
//!
//! A [`TextModel`] bundles the vectorizer and the linear scorer that were
//! fitted together, so explanations downstream always see matching feature
//! spaces. The JSON form carries a schema version; loading a file written
//! by a different version fails instead of misreading it.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::logreg::{train_logreg, LinearModel, TrainConfig, TrainDiagnostics};
use super::sparse::SparseVec;
use super::tfidf::{fit_tfidf, TfIdfConfig, TfIdfModel};
use super::XaiError;

pub const TEXT_MODEL_VERSION: u32 = 1;

/// A vectorizer and the classifier trained on its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TextModelWire")]
pub struct TextModel {
    pub v: u32,
    pub tfidf: TfIdfModel,
    pub linear: LinearModel,
}

/// Wire shadow so deserialization runs the same checks as construction.
#[derive(Deserialize)]
struct TextModelWire {
    v: u32,
    tfidf: TfIdfModel,
    linear: LinearModel,
}

impl TryFrom<TextModelWire> for TextModel {
    type Error = XaiError;

    fn try_from(raw: TextModelWire) -> Result<Self, Self::Error> {
        if raw.v != TEXT_MODEL_VERSION {
            return Err(XaiError::InvalidConfig(format!(
                "model file version {} not supported, expected {TEXT_MODEL_VERSION}",
                raw.v
            )));
        }
        if raw.tfidf.n_features() != raw.linear.n_features() {
            return Err(XaiError::DimensionMismatch {
                expected: raw.tfidf.n_features(),
                got: raw.linear.n_features(),
            });
        }
        Ok(TextModel { v: raw.v, tfidf: raw.tfidf, linear: raw.linear })
    }
}

/// Fits the vectorizer on `texts`, then the classifier on its vectors.
pub fn fit_text_model(
    texts: &[String],
    labels: &[bool],
    tfidf_config: TfIdfConfig,
    train_config: &TrainConfig,
) -> Result<(TextModel, TrainDiagnostics), XaiError> {
    if texts.len() != labels.len() {
        return Err(XaiError::LengthMismatch { left: texts.len(), right: labels.len() });
    }
    let tfidf = fit_tfidf(texts, tfidf_config)?;
    let rows = tfidf.transform_corpus(texts);
    let (linear, diagnostics) = train_logreg(&rows, labels, train_config)?;
    Ok((TextModel { v: TEXT_MODEL_VERSION, tfidf, linear }, diagnostics))
}

impl TextModel {
    pub fn transform(&self, doc: &str) -> SparseVec {
        self.tfidf.transform(doc)
    }

    pub fn predict_proba(&self, doc: &str) -> Result<f64, XaiError> {
        self.linear.predict_proba(&self.transform(doc))
    }

    /// Pretty JSON, newline-terminated, stable key order.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self, XaiError> {
        serde_json::from_str(json).map_err(|e| XaiError::InvalidConfig(format!("model file: {e}")))
    }

    /// Digest of the JSON form, used when explanations reference the model.
    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_json().as_bytes());
        crate::trace::hex(&h.finalize())
    }
}
