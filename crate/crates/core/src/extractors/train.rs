use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::{AdamState, ParamStore};
use crate::textprep::{BatchLimits, Document, Vocabulary};

/// Optimization settings shared by both trainers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub seed: u64,
    pub max_sentences: usize,
    pub max_words: usize,
    /// Re-draw entity marker indices for every document each epoch.
    pub permute_entities: bool,
    /// Negative samples per target word.
    pub noise_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 20,
            lr: 0.001,
            beta1: 0.99,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
            seed: 1,
            max_sentences: 30,
            max_words: 50,
            permute_entities: true,
            noise_samples: 20,
        }
    }
}

impl TrainConfig {
    pub fn limits(&self) -> BatchLimits {
        BatchLimits { max_sentences: self.max_sentences, max_words: self.max_words }
    }

    pub fn adam<T: Scalar>(&self, store: &ParamStore<T>) -> AdamState<T> {
        AdamState::with_hyper(store, T::of(self.lr), T::of(self.beta1), T::of(self.beta2), T::of(self.epsilon))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss per document over the epoch.
    pub loss: f64,
    /// Label accuracy (sentence extractor) or token accuracy (word extractor)
    /// of the training-mode predictions.
    pub accuracy: f64,
}

/// A document as vocabulary ids, truncated to the batch limits with empty
/// sentences removed. `kept[i]` is the original index of sentence `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedDocument {
    pub ids: Vec<Vec<usize>>,
    pub kept: Vec<usize>,
    pub labels: Option<Vec<u8>>,
}

pub fn prepare_ids(doc: &Document, vocab: &Vocabulary, limits: BatchLimits) -> PreparedDocument {
    let mut ids = Vec::new();
    let mut kept = Vec::new();
    for (i, s) in doc.sentences.iter().enumerate().take(limits.max_sentences) {
        if s.is_empty() {
            continue;
        }
        ids.push(s.iter().take(limits.max_words).map(|t| vocab.encode(t)).collect());
        kept.push(i);
    }
    let labels = doc.labels.as_ref().map(|l| kept.iter().map(|&i| l[i]).collect());
    PreparedDocument { ids, kept, labels }
}
