//! TF-IDF vectorization for short-text classification.
//!
//! Tokens are maximal alphanumeric runs, lowercased. Single-character
//! tokens are kept. Stopwords are removed before n-grams are formed, so a
//! bigram can join two words that were separated by a stopword in the raw
//! text. The vocabulary is the set of n-grams whose document frequency df
//! satisfies `min_df <= df <= max_df * n_docs`, indexed in lexicographic
//! order, and
//!
//!   idf(t) = ln((1 + n_docs) / (1 + df(t))) + 1
//!
//! (the smoothed variant, always >= 1). Transformed rows are raw term
//! counts scaled by idf and then L2-normalized.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::sparse::SparseVec;
use super::XaiError;

static ENGLISH_STOPWORDS: OnceLock<HashSet<&'static str>> = OnceLock::new();

fn english_stopwords() -> &'static HashSet<&'static str> {
    ENGLISH_STOPWORDS.get_or_init(|| {
        include_str!("../../assets/stopwords_en.txt")
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .collect()
    })
}

/// Identifier of the stopword list baked into a fitted model.
///
/// The English list is fixed (shipped with the crate) so that a saved model
/// tokenizes identically wherever it is reloaded. Apostrophes split tokens,
/// so the list carries contraction fragments like `don` and `ll`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StopwordList {
    None,
    #[default]
    English,
}

impl StopwordList {
    pub fn contains(&self, token: &str) -> bool {
        match self {
            StopwordList::None => false,
            StopwordList::English => english_stopwords().contains(token),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfConfig {
    /// Inclusive (min, max) n-gram lengths; (1, 2) means unigrams + bigrams.
    pub ngram_range: (usize, usize),
    /// Minimum document frequency (absolute count) for a term to be kept.
    pub min_df: usize,
    /// Maximum document frequency as a fraction of the corpus.
    pub max_df: f64,
    pub stopwords: StopwordList,
}

impl Default for TfIdfConfig {
    fn default() -> Self {
        TfIdfConfig {
            ngram_range: (1, 2),
            min_df: 5,
            max_df: 0.9,
            stopwords: StopwordList::English,
        }
    }
}

impl TfIdfConfig {
    fn validate(&self) -> Result<(), XaiError> {
        let (lo, hi) = self.ngram_range;
        if lo < 1 || hi < lo {
            return Err(XaiError::InvalidConfig(format!(
                "ngram_range ({lo}, {hi}) must satisfy 1 <= min <= max"
            )));
        }
        if self.min_df < 1 {
            return Err(XaiError::InvalidConfig("min_df must be at least 1".into()));
        }
        if !(self.max_df > 0.0 && self.max_df <= 1.0) {
            return Err(XaiError::InvalidConfig(format!(
                "max_df {} must lie in (0, 1]",
                self.max_df
            )));
        }
        Ok(())
    }
}

/// A fitted vectorizer: term -> column index plus the per-column idf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    pub config: TfIdfConfig,
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
}

fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn document_terms(text: &str, config: &TfIdfConfig) -> Vec<String> {
    let words: Vec<String> = word_tokens(text)
        .into_iter()
        .filter(|w| !config.stopwords.contains(w))
        .collect();
    let (lo, hi) = config.ngram_range;
    let mut terms = Vec::new();
    for n in lo..=hi {
        if n > words.len() {
            break;
        }
        for window in words.windows(n) {
            terms.push(window.join(" "));
        }
    }
    terms
}

pub fn fit_tfidf(corpus: &[String], config: TfIdfConfig) -> Result<TfIdfModel, XaiError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(XaiError::EmptyInput);
    }
    let n_docs = corpus.len();
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        let unique: BTreeSet<String> = document_terms(doc, &config).into_iter().collect();
        for term in unique {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    let df_ceiling = config.max_df * n_docs as f64;
    let mut vocabulary = BTreeMap::new();
    let mut idf = Vec::new();
    for (term, count) in df {
        if count < config.min_df || count as f64 > df_ceiling {
            continue;
        }
        let column = vocabulary.len();
        idf.push(((1 + n_docs) as f64 / (1 + count) as f64).ln() + 1.0);
        vocabulary.insert(term, column);
    }
    if vocabulary.is_empty() {
        return Err(XaiError::EmptyVocabulary);
    }
    Ok(TfIdfModel { config, vocabulary, idf })
}

impl TfIdfModel {
    pub fn n_features(&self) -> usize {
        self.vocabulary.len()
    }

    /// Lexicographically ordered vocabulary; values are contiguous column
    /// indices 0..n_features.
    pub fn vocabulary(&self) -> &BTreeMap<String, usize> {
        &self.vocabulary
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocabulary.get(term).map(|&i| self.idf[i])
    }

    /// Column index -> term, for labeling attribution outputs.
    pub fn terms(&self) -> Vec<&str> {
        let mut out = vec![""; self.vocabulary.len()];
        for (term, &i) in &self.vocabulary {
            out[i] = term;
        }
        out
    }

    /// Maps a document to its L2-normalized tf-idf row. Out-of-vocabulary
    /// terms are ignored; a document with no in-vocabulary terms maps to
    /// the zero vector.
    pub fn transform(&self, doc: &str) -> SparseVec {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for term in document_terms(doc, &self.config) {
            if let Some(&column) = self.vocabulary.get(&term) {
                *counts.entry(column).or_insert(0.0) += 1.0;
            }
        }
        let mut indices = Vec::with_capacity(counts.len());
        let mut values = Vec::with_capacity(counts.len());
        for (column, count) in counts {
            indices.push(column);
            values.push(count * self.idf[column]);
        }
        let mut row = SparseVec::from_sorted_unchecked(self.vocabulary.len(), indices, values);
        let norm = row.l2_norm();
        if norm > 0.0 {
            row.scale(1.0 / norm);
        }
        row
    }

    pub fn transform_corpus(&self, corpus: &[String]) -> Vec<SparseVec> {
        corpus.iter().map(|doc| self.transform(doc)).collect()
    }
}
