//! Word-extraction targets: highlight tokens mapped onto document words.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::datagen::stem::stem;
use crate::scalar::Scalar;
use crate::textprep::{Document, EmbeddingTable, Vocabulary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Substitution {
    pub token: String,
    pub replacement: String,
    pub cosine: f64,
}

/// A document paired with a target sequence drawn from its own words.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordExtractionExample {
    pub document: Document,
    pub target: Vec<String>,
    pub substitutions: Vec<Substitution>,
}

impl WordExtractionExample {
    pub fn id(&self) -> &str {
        &self.document.id
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WordExtractionOutcome {
    Accepted(WordExtractionExample),
    /// `token` could not be matched or substituted.
    Rejected {
        id: String,
        token: String,
    },
}

impl WordExtractionOutcome {
    pub fn accepted(&self) -> Option<&WordExtractionExample> {
        match self {
            Self::Accepted(e) => Some(e),
            Self::Rejected { .. } => None,
        }
    }
}

/// The `k` rows most cosine-similar to `id`, excluding `id` itself and the
/// PAD/UNK/START/END symbols. Ties go to the lower index.
pub fn nearest_neighbors<T: Scalar>(emb: &EmbeddingTable<T>, id: usize, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (4..emb.rows()).filter(|&j| j != id).map(|j| (j, emb.cosine(id, j))).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Builds the target from the document's highlights (concatenated in
/// order). Each highlight token is kept when the document contains it,
/// replaced by the first document token with the same stem, or replaced by
/// the best-ranked of its `k` embedding neighbours that has cosine `>= tau`
/// and occurs in the document (exactly or by stem). Any other token rejects
/// the pair.
pub fn build_word_extraction_example<T: Scalar>(
    doc: &Document,
    vocab: &Vocabulary,
    emb: &EmbeddingTable<T>,
    k: usize,
    tau: f64,
) -> WordExtractionOutcome {
    let exact: HashSet<&str> = doc.sentences.iter().flatten().map(String::as_str).collect();
    let mut by_stem: HashMap<String, &str> = HashMap::new();
    for t in doc.sentences.iter().flatten() {
        by_stem.entry(stem(t)).or_insert(t.as_str());
    }
    let in_doc = |t: &str| -> Option<String> {
        if exact.contains(t) {
            Some(t.to_string())
        } else {
            by_stem.get(&stem(t)).map(|s| s.to_string())
        }
    };

    let mut target = Vec::new();
    let mut substitutions = Vec::new();
    for tok in doc.highlights().iter().flatten() {
        if let Some(t) = in_doc(tok) {
            target.push(t);
            continue;
        }
        let found = vocab.get(tok).filter(|&id| id < emb.rows()).and_then(|id| {
            nearest_neighbors(emb, id, k)
                .into_iter()
                .filter(|&(_, c)| c >= tau)
                .find_map(|(j, c)| in_doc(vocab.decode(j)).map(|r| (r, c)))
        });
        match found {
            Some((replacement, cosine)) => {
                substitutions.push(Substitution { token: tok.clone(), replacement: replacement.clone(), cosine });
                target.push(replacement);
            }
            None => return WordExtractionOutcome::Rejected { id: doc.id.clone(), token: tok.clone() },
        }
    }
    WordExtractionOutcome::Accepted(WordExtractionExample { document: doc.clone(), target, substitutions })
}

/// Summary of a dataset-construction run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub documents: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub acceptance_rate: f64,
    pub sentences: usize,
    pub positive_sentences: usize,
    pub positive_rate: f64,
    /// `(document id, substitution)`
    pub substitutions: Vec<(String, Substitution)>,
}

impl ConstructionReport {
    pub fn record_labels(&mut self, labels: &[u8]) {
        self.sentences += labels.len();
        self.positive_sentences += labels.iter().filter(|&&l| l == 1).count();
        self.positive_rate = ratio(self.positive_sentences, self.sentences);
    }

    pub fn record_outcome(&mut self, outcome: &WordExtractionOutcome) {
        self.documents += 1;
        match outcome {
            WordExtractionOutcome::Accepted(e) => {
                self.accepted += 1;
                self.substitutions.extend(e.substitutions.iter().map(|s| (e.id().to_string(), s.clone())));
            }
            WordExtractionOutcome::Rejected { .. } => self.rejected += 1,
        }
        self.acceptance_rate = ratio(self.accepted, self.documents);
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}
