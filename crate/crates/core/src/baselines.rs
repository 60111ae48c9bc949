//! LEAD and logistic-regression sentence extraction baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{truncate, LimitSpec};
use crate::extractors::select_summary_sentences;
use crate::scalar::{sigmoid, Scalar};
use crate::textprep::{cosine, is_entity_marker, Document, EmbeddingTable, Vocabulary};

/// Number of sentences taken by the LEAD baseline.
pub const LEAD_SENTENCES: usize = 3;

/// `[length, position, entities, cohesion, relevance]`
pub const NUM_LREG_FEATURES: usize = 5;

pub type LregFeatures = [f64; NUM_LREG_FEATURES];

/// The first three sentences, concatenated and truncated to `limit`.
pub fn lead3(doc: &Document, limit: LimitSpec) -> Vec<String> {
    let tokens: Vec<String> = doc.sentences.iter().take(LEAD_SENTENCES).flatten().cloned().collect();
    truncate(&tokens, limit)
}

fn mean_embedding<T: Scalar>(tokens: &[String], vocab: &Vocabulary, emb: &EmbeddingTable<T>) -> Vec<f64> {
    let mut out = vec![0.0; emb.dim()];
    if tokens.is_empty() {
        return out;
    }
    for t in tokens {
        let id = vocab.encode(t);
        if id < emb.rows() {
            for (o, x) in out.iter_mut().zip(emb.row(id)) {
                *o += x.to_f64_lossy();
            }
        }
    }
    out.iter_mut().for_each(|x| *x /= tokens.len() as f64);
    out
}

fn normalize_by_max(xs: &mut [f64]) {
    let m = xs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m > 0.0 {
        xs.iter_mut().for_each(|x| *x /= m);
    }
}

/// Per-sentence features. Sentence and document vectors are mean word
/// embeddings. Cohesion sums the cosine to every other sentence and
/// relevance is the cosine to the document vector; both are divided by
/// their largest absolute value in the document.
pub fn lreg_features<T: Scalar>(doc: &Document, vocab: &Vocabulary, emb: &EmbeddingTable<T>) -> Vec<LregFeatures> {
    let m = doc.sentences.len();
    let vecs: Vec<Vec<f64>> = doc.sentences.iter().map(|s| mean_embedding(s, vocab, emb)).collect();
    let all: Vec<String> = doc.tokens().cloned().collect();
    let doc_vec = mean_embedding(&all, vocab, emb);
    let mut cohesion: Vec<f64> =
        (0..m).map(|i| (0..m).filter(|&j| j != i).map(|j| cosine(&vecs[i], &vecs[j])).sum()).collect();
    let mut relevance: Vec<f64> = vecs.iter().map(|v| cosine(v, &doc_vec)).collect();
    normalize_by_max(&mut cohesion);
    normalize_by_max(&mut relevance);
    doc.sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            [
                s.len() as f64,
                i as f64,
                s.iter().filter(|t| is_entity_marker(t)).count() as f64,
                cohesion[i],
                relevance[i],
            ]
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LregOptions {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop when the mean log-loss changes by less than this.
    pub tolerance: f64,
}

impl Default for LregOptions {
    fn default() -> Self {
        Self { learning_rate: 0.5, max_epochs: 20_000, tolerance: 1e-6 }
    }
}

/// Logistic regression on standardized features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LregModel {
    pub weights: LregFeatures,
    pub bias: f64,
    pub mean: LregFeatures,
    pub std: LregFeatures,
    pub threshold: f64,
}

impl LregModel {
    /// A model whose probabilities are all 0.5.
    pub fn zero() -> Self {
        Self {
            weights: [0.0; NUM_LREG_FEATURES],
            bias: 0.0,
            mean: [0.0; NUM_LREG_FEATURES],
            std: [1.0; NUM_LREG_FEATURES],
            threshold: 0.5,
        }
    }

    fn standardize(&self, x: &LregFeatures) -> LregFeatures {
        let mut out = [0.0; NUM_LREG_FEATURES];
        for k in 0..NUM_LREG_FEATURES {
            out[k] = (x[k] - self.mean[k]) / self.std[k];
        }
        out
    }

    pub fn probability(&self, x: &LregFeatures) -> f64 {
        let z = self.standardize(x);
        sigmoid(self.bias + self.weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>())
    }

    pub fn predict(&self, x: &LregFeatures) -> u8 {
        u8::from(self.probability(x) >= self.threshold)
    }

    /// Sets the threshold that maximizes accuracy on `(features, labels)`.
    /// Candidates are 0.5 and every predicted probability; the first best
    /// candidate in that order wins.
    pub fn tune_threshold(&mut self, features: &[LregFeatures], labels: &[u8]) -> Result<f64> {
        if features.is_empty() {
            return Err(Error::NoValidationData);
        }
        let probs: Vec<f64> = features.iter().map(|x| self.probability(x)).collect();
        let accuracy = |t: f64| {
            probs.iter().zip(labels).filter(|(p, &y)| u8::from(**p >= t) == y).count() as f64 / probs.len() as f64
        };
        let mut best = (0.5, accuracy(0.5));
        for &t in &probs {
            let a = accuracy(t);
            if a > best.1 {
                best = (t, a);
            }
        }
        self.threshold = best.0;
        Ok(best.1)
    }

    /// Per-sentence probabilities for a document.
    pub fn score_document<T: Scalar>(&self, doc: &Document, vocab: &Vocabulary, emb: &EmbeddingTable<T>) -> Vec<f64> {
        lreg_features(doc, vocab, emb).iter().map(|x| self.probability(x)).collect()
    }

    /// Top-`k` sentences by probability under `limit`, in document order.
    pub fn summarize<T: Scalar>(
        &self,
        doc: &Document,
        vocab: &Vocabulary,
        emb: &EmbeddingTable<T>,
        k: usize,
        limit: LimitSpec,
    ) -> Vec<usize> {
        select_summary_sentences(&self.score_document(doc, vocab, emb), &doc.sentences, k, limit)
    }
}

/// Full-batch gradient descent on mean log-loss from zero weights.
pub fn train_lreg(features: &[LregFeatures], labels: &[u8], opts: &LregOptions) -> Result<LregModel> {
    if features.is_empty() {
        return Err(Error::NoTrainingData);
    }
    if features.len() != labels.len() {
        return Err(Error::Shape(format!("{} feature rows for {} labels", features.len(), labels.len())));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::DegenerateLabels);
    }
    let n = features.len() as f64;
    let mut model = LregModel::zero();
    for k in 0..NUM_LREG_FEATURES {
        let mean = features.iter().map(|x| x[k]).sum::<f64>() / n;
        let var = features.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() / n;
        model.mean[k] = mean;
        model.std[k] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let z: Vec<LregFeatures> = features.iter().map(|x| model.standardize(x)).collect();
    let mut last = f64::INFINITY;
    for epoch in 0..opts.max_epochs {
        let mut gw = [0.0; NUM_LREG_FEATURES];
        let mut gb = 0.0;
        let mut loss = 0.0;
        for (x, &y) in z.iter().zip(labels) {
            let s = model.bias + model.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            let p = sigmoid(s);
            let y = f64::from(y);
            loss += crate::scalar::softplus(s) - y * s;
            let d = p - y;
            gb += d;
            for k in 0..NUM_LREG_FEATURES {
                gw[k] += d * x[k];
            }
        }
        loss /= n;
        if (last - loss).abs() < opts.tolerance {
            log::debug!("lreg converged after {epoch} epochs, loss {loss:.6}");
            break;
        }
        last = loss;
        model.bias -= opts.learning_rate * gb / n;
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= opts.learning_rate * g / n;
        }
    }
    Ok(model)
}

/// Features and labels of every sentence in a labeled corpus.
pub fn corpus_features<T: Scalar>(
    docs: &[Document],
    vocab: &Vocabulary,
    emb: &EmbeddingTable<T>,
) -> Result<(Vec<LregFeatures>, Vec<u8>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for d in docs {
        let labels = d.labels.as_ref().ok_or_else(|| Error::MissingLabels(d.id.clone()))?;
        xs.extend(lreg_features(d, vocab, emb));
        ys.extend_from_slice(labels);
    }
    Ok((xs, ys))
}
