//! Log-linear reranking of n-best lists with document n-gram features.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::rouge_n;

/// Feature order: 1-, 2-, 3-gram document overlap counts, then length.
pub const NUM_FEATURES: usize = 4;

/// Values tried per weight during tuning, in sweep order.
pub const RERANK_GRID: &[f64] = &[-2.0, -1.0, -0.5, -0.25, -0.1, -0.05, 0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0];

const MAX_PASSES: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RerankerWeights {
    pub lambdas: [f64; NUM_FEATURES],
}

impl RerankerWeights {
    pub fn score(&self, c: &RerankCandidate) -> f64 {
        c.score + self.lambdas.iter().zip(&c.features).map(|(l, f)| l * f).sum::<f64>()
    }
}

/// Number of candidate n-grams (with multiplicity) that occur in the
/// document, for n = 1..3, followed by the candidate length.
pub fn candidate_features(tokens: &[String], doc: &[Vec<String>]) -> [f64; NUM_FEATURES] {
    let mut out = [0.0; NUM_FEATURES];
    for n in 1..=3 {
        let doc_grams: HashSet<&[String]> = doc.iter().filter(|s| s.len() >= n).flat_map(|s| s.windows(n)).collect();
        if tokens.len() >= n {
            out[n - 1] = tokens.windows(n).filter(|g| doc_grams.contains(g)).count() as f64;
        }
    }
    out[3] = tokens.len() as f64;
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerankCandidate {
    pub tokens: Vec<String>,
    /// Length-normalized model log-probability.
    pub score: f64,
    pub features: [f64; NUM_FEATURES],
}

/// One line of an n-best dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NBestEntry {
    pub doc_id: String,
    pub rank: usize,
    pub tokens: Vec<String>,
    /// Summed log-probability.
    pub logprob: f64,
    /// Length-normalized log-probability used for ranking.
    pub score: f64,
    pub features: [f64; NUM_FEATURES],
}

impl NBestEntry {
    pub fn candidate(&self) -> RerankCandidate {
        RerankCandidate { tokens: self.tokens.clone(), score: self.score, features: self.features }
    }
}

/// A document's candidates with its reference summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct NBestItem {
    pub doc_id: String,
    pub candidates: Vec<RerankCandidate>,
    pub references: Vec<Vec<String>>,
}

/// Index of the best candidate by `score + lambda . features`; ties go to
/// the higher model score, then to the earlier candidate.
pub fn rerank(candidates: &[RerankCandidate], weights: &RerankerWeights) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let s = weights.score(c);
        best = match best {
            Some((j, bs)) if bs > s || (bs == s && candidates[j].score >= c.score) => Some((j, bs)),
            _ => Some((i, s)),
        };
    }
    best.map(|(i, _)| i)
}

fn objective(items: &[NBestItem], weights: &RerankerWeights) -> f64 {
    let total: f64 = items
        .iter()
        .map(|it| match rerank(&it.candidates, weights) {
            Some(i) => rouge_n(&it.candidates[i].tokens, &it.references, 2).f1,
            None => 0.0,
        })
        .sum();
    total / items.len() as f64
}

/// Coordinate ascent from zero weights: each pass sweeps every weight over
/// [`RERANK_GRID`], keeping a value only if it strictly raises mean ROUGE-2
/// F. Stops after a pass without improvement. Returns the weights and the
/// objective.
pub fn tune_rerank_weights(items: &[NBestItem]) -> Result<(RerankerWeights, f64)> {
    if items.is_empty() {
        return Err(Error::NoValidationData);
    }
    let mut w = RerankerWeights::default();
    let mut best = objective(items, &w);
    for pass in 0..MAX_PASSES {
        let mut improved = false;
        for f in 0..NUM_FEATURES {
            for &value in RERANK_GRID {
                let mut trial = w;
                trial.lambdas[f] = value;
                let obj = objective(items, &trial);
                if obj > best {
                    best = obj;
                    w = trial;
                    improved = true;
                }
            }
        }
        log::debug!("rerank pass {pass}: rouge-2 f {best:.4} weights {:?}", w.lambdas);
        if !improved {
            break;
        }
    }
    Ok((w, best))
}
