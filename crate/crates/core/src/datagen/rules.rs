//! Sentence labeling against highlights with a linear rule.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::{is_entity_marker, Document};

/// Overlap of one document sentence with its best-matching highlight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceFeatures {
    pub position: usize,
    pub unigram_overlap: f64,
    pub bigram_overlap: f64,
    pub entity_overlap_count: usize,
    pub sentence_length: usize,
}

impl SentenceFeatures {
    /// `[position, unigram, bigram, entities, length]`
    pub fn vector(&self) -> [f64; 5] {
        [
            self.position as f64,
            self.unigram_overlap,
            self.bigram_overlap,
            self.entity_overlap_count as f64,
            self.sentence_length as f64,
        ]
    }
}

fn ngrams(tokens: &[String], n: usize) -> HashSet<&[String]> {
    if tokens.len() < n {
        return HashSet::new();
    }
    tokens.windows(n).collect()
}

fn recall(sentence: &[String], highlight: &[String], n: usize) -> f64 {
    let h = ngrams(highlight, n);
    if h.is_empty() {
        return 0.0;
    }
    let s = ngrams(sentence, n);
    h.intersection(&s).count() as f64 / h.len() as f64
}

/// Scores a sentence against a set of highlights. The best-matching highlight
/// is the one with the largest `(unigram, bigram)` recall pair, compared
/// lexicographically, so the result does not depend on highlight order.
pub fn score_sentence(sentence: &[String], highlights: &[Vec<String>], position: usize) -> SentenceFeatures {
    let mut best = (0.0, 0.0);
    for h in highlights {
        let pair = (recall(sentence, h, 1), recall(sentence, h, 2));
        if pair.0 > best.0 || (pair.0 == best.0 && pair.1 > best.1) {
            best = pair;
        }
    }
    let highlight_entities: HashSet<&String> = highlights.iter().flatten().filter(|t| is_entity_marker(t)).collect();
    let sentence_entities: HashSet<&String> = sentence.iter().filter(|t| is_entity_marker(t)).collect();
    SentenceFeatures {
        position,
        unigram_overlap: best.0,
        bigram_overlap: best.1,
        entity_overlap_count: sentence_entities.intersection(&highlight_entities).count(),
        sentence_length: sentence.len(),
    }
}

/// Linear labeling rule: a sentence is positive iff
/// `bias + weights . features >= threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRuleWeights {
    /// Order: position, unigram overlap, bigram overlap, entity overlap, length.
    pub weights: [f64; 5],
    pub bias: f64,
    pub threshold: f64,
}

impl Default for LabelRuleWeights {
    fn default() -> Self {
        Self { weights: [0.0, 1.0, 1.0, 0.0, 0.0], bias: 0.0, threshold: 0.8 }
    }
}

impl LabelRuleWeights {
    pub fn score(&self, f: &SentenceFeatures) -> f64 {
        self.bias + self.weights.iter().zip(f.vector()).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn label(&self, f: &SentenceFeatures) -> u8 {
        u8::from(self.score(f) >= self.threshold)
    }
}

/// Labels every sentence of `doc` against `highlights`.
pub fn label_document(doc: &Document, highlights: &[Vec<String>], weights: &LabelRuleWeights) -> Vec<u8> {
    let labels: Vec<u8> =
        doc.sentences.iter().enumerate().map(|(i, s)| weights.label(&score_sentence(s, highlights, i))).collect();
    if !labels.is_empty() {
        let pos = labels.iter().filter(|&&l| l == 1).count();
        log::debug!("{}: {pos}/{} sentences positive", doc.id, labels.len());
    }
    labels
}

/// Candidate values per feature weight, smallest magnitude first. Overlap
/// weights are non-negative so the rule stays monotone in overlap.
pub const WEIGHT_GRID: [&[f64]; 5] =
    [&[0.0, -0.05, -0.1, -0.2], &[0.0, 0.5, 1.0, 2.0], &[0.0, 0.5, 1.0, 2.0], &[0.0, 0.1, 0.25], &[0.0, -0.01, 0.01]];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunedRules {
    pub weights: LabelRuleWeights,
    pub accuracy: f64,
}

/// Exhaustive grid over [`WEIGHT_GRID`] with a full threshold sweep,
/// maximizing sentence accuracy on documents carrying gold labels and
/// highlights. Grid points are visited in order of increasing L1 norm and
/// only strict improvements are kept, so ties resolve toward smaller weights.
pub fn tune_rule_weights(docs: &[Document]) -> Result<TunedRules> {
    let mut feats = Vec::new();
    let mut gold = Vec::new();
    for d in docs {
        let labels = d.labels.as_ref().ok_or_else(|| Error::MissingLabels(d.id.clone()))?;
        for (i, s) in d.sentences.iter().enumerate() {
            feats.push(score_sentence(s, d.highlights(), i).vector());
            gold.push(labels[i]);
        }
    }
    let positives = gold.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == gold.len() {
        return Err(Error::DegenerateLabels);
    }

    let mut combos: Vec<[usize; 5]> = Vec::new();
    for a in 0..WEIGHT_GRID[0].len() {
        for b in 0..WEIGHT_GRID[1].len() {
            for c in 0..WEIGHT_GRID[2].len() {
                for d in 0..WEIGHT_GRID[3].len() {
                    for e in 0..WEIGHT_GRID[4].len() {
                        combos.push([a, b, c, d, e]);
                    }
                }
            }
        }
    }
    let l1 = |c: &[usize; 5]| -> f64 { c.iter().enumerate().map(|(f, &k)| WEIGHT_GRID[f][k].abs()).sum() };
    combos.sort_by(|x, y| l1(x).total_cmp(&l1(y)).then(x.cmp(y)));

    let mut best: Option<(usize, LabelRuleWeights)> = None;
    for combo in combos {
        let w: [f64; 5] = std::array::from_fn(|f| WEIGHT_GRID[f][combo[f]]);
        let scores: Vec<f64> = feats.iter().map(|x| w.iter().zip(x).map(|(a, b)| a * b).sum()).collect();
        let (threshold, correct) = best_threshold(&scores, &gold);
        if best.as_ref().is_none_or(|(c, _)| correct > *c) {
            best = Some((correct, LabelRuleWeights { weights: w, bias: 0.0, threshold }));
        }
    }
    let (correct, weights) = best.expect("grid is non-empty");
    Ok(TunedRules { weights, accuracy: correct as f64 / gold.len() as f64 })
}

/// Sweeps thresholds below, between, and above the sorted distinct scores;
/// returns the first threshold achieving the most correct labels.
fn best_threshold(scores: &[f64], gold: &[u8]) -> (f64, usize) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // threshold below everything: all predicted positive
    let mut correct: usize = gold.iter().filter(|&&l| l == 1).count();
    let lowest = scores[order[0]] - 1.0;
    let mut best = (lowest, correct);
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        // move every item with score == v below the threshold
        while i < order.len() && scores[order[i]] == v {
            if gold[order[i]] == 1 {
                correct -= 1;
            } else {
                correct += 1;
            }
            i += 1;
        }
        let threshold = if i < order.len() { (v + scores[order[i]]) / 2.0 } else { v + 1.0 };
        if correct > best.1 {
            best = (threshold, correct);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn verbatim_and_disjoint() {
        let h = vec![toks("the mayor resigned today")];
        let f = score_sentence(&toks("the mayor resigned today"), &h, 0);
        assert_eq!((f.unigram_overlap, f.bigram_overlap), (1.0, 1.0));
        let f = score_sentence(&toks("rain fell hard"), &h, 3);
        assert_eq!((f.unigram_overlap, f.bigram_overlap, f.position), (0.0, 0.0, 3));
        let f = score_sentence(&toks("anything"), &[], 0);
        assert_eq!((f.unigram_overlap, f.bigram_overlap), (0.0, 0.0));
    }

    #[test]
    fn overlap_matches_set_intersection() {
        let s = toks("entity1 said the new bridge will open in may , entity1 said");
        let hs = vec![toks("entity1 says bridge will open in june"), toks("costs rose for entity2")];
        let f = score_sentence(&s, &hs, 2);
        // highlight 0 unigrams: entity1 says bridge will open in june -> 7, shared: entity1 bridge will open in = 5
        assert!((f.unigram_overlap - 5.0 / 7.0).abs() < 1e-12);
        // bigrams: (entity1 says)(says bridge)(bridge will)(will open)(open in)(in june) -> shared 3
        assert!((f.bigram_overlap - 3.0 / 6.0).abs() < 1e-12);
        assert_eq!(f.entity_overlap_count, 1);
        assert_eq!(f.sentence_length, 12);
    }

    #[test]
    fn labels_verbatim_sentence_and_zero_rule() {
        let d = Document::new("d", vec![toks("rain fell"), toks("the mayor resigned"), toks("people left")]);
        let h = vec![toks("the mayor resigned")];
        assert_eq!(label_document(&d, &h, &LabelRuleWeights::default()), vec![0, 1, 0]);
        let zero = LabelRuleWeights { weights: [0.0; 5], bias: 0.0, threshold: 0.5 };
        assert_eq!(label_document(&d, &h, &zero), vec![0, 0, 0]);
    }

    #[test]
    fn labels_ignore_highlight_order() {
        let d = Document::new("d", vec![toks("a b c d"), toks("c d e"), toks("x y")]);
        let h1 = vec![toks("a b x"), toks("c d e f")];
        let h2 = vec![toks("c d e f"), toks("a b x")];
        let w = LabelRuleWeights { weights: [0.0, 1.0, 0.5, 0.0, 0.0], bias: 0.0, threshold: 0.7 };
        assert_eq!(label_document(&d, &h1, &w), label_document(&d, &h2, &w));
    }

    fn labeled(id: &str, sents: &[&str], highlights: &[&str], labels: &[u8]) -> Document {
        let mut d = Document::new(id, sents.iter().map(|s| toks(s)).collect());
        d.highlights = Some(highlights.iter().map(|s| toks(s)).collect());
        d.labels = Some(labels.to_vec());
        d
    }

    #[test]
    fn separable_and_inverted() {
        let docs = vec![
            labeled("a", &["the cat sat", "dogs bark loudly"], &["the cat sat"], &[1, 0]),
            labeled("b", &["birds fly south", "fish swim"], &["fish swim"], &[0, 1]),
        ];
        let t = tune_rule_weights(&docs).unwrap();
        assert_eq!(t.accuracy, 1.0);

        let inverted: Vec<Document> = docs
            .iter()
            .map(|d| {
                let mut d = d.clone();
                d.labels = Some(d.labels.unwrap().iter().map(|l| 1 - l).collect());
                d
            })
            .collect();
        assert!(tune_rule_weights(&inverted).unwrap().accuracy >= 0.5);
    }

    #[test]
    fn degenerate_and_missing_labels() {
        let one_class = vec![labeled("a", &["x", "y"], &["x"], &[0, 0])];
        assert!(matches!(tune_rule_weights(&one_class), Err(Error::DegenerateLabels)));
        let unlabeled = vec![Document::new("u", vec![toks("x")])];
        assert!(matches!(tune_rule_weights(&unlabeled), Err(Error::MissingLabels(_))));
    }

    #[test]
    fn threshold_sweep_covers_extremes() {
        let (t, c) = best_threshold(&[0.0, 0.0, 0.0], &[0, 0, 1]);
        assert_eq!(c, 2);
        assert!(t > 0.0);
        let (t, c) = best_threshold(&[1.0, 2.0, 3.0], &[0, 1, 1]);
        assert_eq!(c, 3);
        assert!(t > 1.0 && t <= 2.0);
    }
}
