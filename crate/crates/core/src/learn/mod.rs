//! Incremental binary text classification over token counts.
//!
//! A [`TextModel`] is logistic regression with a growing vocabulary. Each
//! [`train_update`] warm-starts from the previous weights, which is how user
//! contributions "fine-tune" a category model over time.

mod corpus;
mod simulate;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use corpus::{synth_corpus, synth_corpus_with, Corpus, CorpusParams, Lexicon};
pub use simulate::{
    median_timesteps_to_reach, simulate_collaboration, timesteps_to_reach, AccuracyCurve, CurvePoint,
    SimulationConfig, CONVERGENCE_TOLERANCE,
};

use crate::error::{Error, Result};

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn target(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => 0.0,
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub text: String,
    pub label: Label,
    pub contributor: String,
    pub timestep: u64,
}

impl LabeledText {
    pub fn new(text: impl Into<String>, label: Label) -> Self {
        Self {
            text: text.into(),
            label,
            contributor: String::new(),
            timestep: 0,
        }
    }

    pub fn by(mut self, contributor: impl Into<String>, timestep: u64) -> Self {
        self.contributor = contributor.into();
        self.timestep = timestep;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub passes: u32,
    /// Return the mean of the iterates visited during the update instead of
    /// the last one.
    pub averaged: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            passes: 3,
            averaged: true,
        }
    }
}

/// Logistic regression over token counts. `weights[0]` is the bias and
/// `weights[i + 1]` belongs to the token with vocabulary index `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextModel {
    pub category: String,
    pub vocabulary: BTreeMap<String, usize>,
    pub weights: Vec<f64>,
    pub examples_seen: u64,
    pub version: u64,
}

/// Sparse token-count features: `(weight index, count)` with index 0 the bias.
pub type Features = Vec<(usize, f64)>;

impl TextModel {
    pub fn new(category: impl Into<String>) -> Self {
        Self {
            category: category.into(),
            vocabulary: BTreeMap::new(),
            weights: vec![0.0],
            examples_seen: 0,
            version: 0,
        }
    }

    pub fn bias(&self) -> f64 {
        self.weights[0]
    }

    pub fn is_trained(&self) -> bool {
        self.version > 0
    }

    /// Features over known tokens only; unseen tokens are dropped.
    pub fn features(&self, text: &str) -> Features {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in tokenize(text) {
            if let Some(&i) = self.vocabulary.get(&tok) {
                *counts.entry(i + 1).or_default() += 1.0;
            }
        }
        std::iter::once((0, 1.0)).chain(counts).collect()
    }

    fn extend_vocabulary(&mut self, batch: &[LabeledText]) {
        for ex in batch {
            for tok in tokenize(&ex.text) {
                let next = self.vocabulary.len();
                if let std::collections::btree_map::Entry::Vacant(e) = self.vocabulary.entry(tok) {
                    e.insert(next);
                    self.weights.push(0.0);
                }
            }
        }
    }

    pub fn score_features(&self, features: &Features) -> f64 {
        sigmoid(dot(&self.weights, features))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(weights: &[f64], features: &Features) -> f64 {
    features.iter().map(|&(i, v)| weights[i] * v).sum()
}

/// Negative log-likelihood of one example.
pub fn log_loss(weights: &[f64], features: &Features, label: Label) -> f64 {
    let z = dot(weights, features);
    // log(1 + e^z) - y z, computed stably.
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - label.target() * z
}

/// Analytic gradient of [`log_loss`] with respect to every weight.
pub fn log_loss_gradient(weights: &[f64], features: &Features, label: Label) -> Vec<f64> {
    let residual = sigmoid(dot(weights, features)) - label.target();
    let mut grad = vec![0.0; weights.len()];
    for &(i, v) in features {
        grad[i] += residual * v;
    }
    grad
}

fn version_seed(version: u64) -> u64 {
    version.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5EED
}

/// One warm-started training round over `batch`.
///
/// Unseen tokens extend the vocabulary with zero weights, then the batch is
/// visited `passes` times in an order shuffled by a seed derived from the
/// model version. The result is deterministic in `(model, batch, cfg)`.
pub fn train_update(model: &TextModel, batch: &[LabeledText], cfg: &TrainConfig) -> Result<TextModel> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut next = model.clone();
    next.extend_vocabulary(batch);
    let examples: Vec<(Features, Label)> = batch
        .iter()
        .map(|ex| (next.features(&ex.text), ex.label))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(version_seed(model.version));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut w = next.weights.clone();
    let mut avg = vec![0.0; w.len()];
    let mut steps = 0u64;
    for _ in 0..cfg.passes {
        order.shuffle(&mut rng);
        for &k in &order {
            let (features, label) = &examples[k];
            let residual = sigmoid(dot(&w, features)) - label.target();
            for &(i, v) in features {
                w[i] -= cfg.learning_rate * residual * v;
            }
            steps += 1;
            if cfg.averaged {
                let inv = 1.0 / steps as f64;
                for (a, x) in avg.iter_mut().zip(&w) {
                    *a += (x - *a) * inv;
                }
            }
        }
    }
    next.weights = if cfg.averaged && steps > 0 { avg } else { w };
    next.examples_seen += batch.len() as u64;
    next.version += 1;
    Ok(next)
}

/// Probability that `text` belongs to the positive class.
pub fn classify(model: &TextModel, text: &str) -> Result<f64> {
    if !model.is_trained() {
        return Err(Error::Untrained);
    }
    Ok(model.score_features(&model.features(text)))
}

/// Fraction of `test` whose thresholded score (>= 0.5 means positive) agrees
/// with the label.
pub fn evaluate(model: &TextModel, test: &[LabeledText]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if !model.is_trained() {
        return Err(Error::Untrained);
    }
    let correct = test
        .iter()
        .filter(|ex| {
            let predicted = if model.score_features(&model.features(&ex.text)) >= 0.5 {
                Label::Positive
            } else {
                Label::Negative
            };
            predicted == ex.label
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}
