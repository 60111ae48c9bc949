use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::textprep::document::Document;
use crate::textprep::entities::is_entity_marker;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const START: &str = "<s>";
pub const END: &str = "</s>";

/// High-frequency function words the word extractor may emit even when the
/// document does not contain them.
pub const STOP_WORDS: &[&str] = &[
    "the", "a", "an", "of", "to", "in", "on", "at", "for", "with", "and", "or", "but", "is", "was", "are", "were",
    "be", "has", "have", "had", "by", "from", "as", "that", "it", "its", "his", "her", "their", "after", "over",
    "into", "up", "out", ".", ",", "'s",
];

/// Token/index mapping. Index 0 is PAD, then UNK, START, END, the entity
/// markers, and corpus tokens by descending frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    /// Corpus frequency per index (zero for reserved symbols).
    pub counts: Vec<u64>,
    pub num_entities: usize,
}

impl Vocabulary {
    pub const PAD_ID: usize = 0;
    pub const UNK_ID: usize = 1;
    pub const START_ID: usize = 2;
    pub const END_ID: usize = 3;

    fn from_parts(tokens: Vec<String>, counts: Vec<u64>, num_entities: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index, counts, num_entities }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_reserved(&self) -> usize {
        4 + self.num_entities
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn encode(&self, token: &str) -> usize {
        self.get(token).unwrap_or(Self::UNK_ID)
    }

    pub fn decode(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(UNK, String::as_str)
    }

    pub fn encode_all(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.encode(t)).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_entity_id(&self, id: usize) -> bool {
        (4..4 + self.num_entities).contains(&id)
    }
}

/// Builds a vocabulary keeping tokens seen at least `min_count` times.
pub fn build_vocab(corpus: &[Document], min_count: u64, num_entities: usize) -> Vocabulary {
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for d in corpus {
        for t in d.sentences.iter().chain(d.highlights()).flatten() {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut tokens: Vec<String> = vec![PAD.into(), UNK.into(), START.into(), END.into()];
    tokens.extend((0..num_entities).map(|k| format!("entity{k}")));
    let mut counts = vec![0u64; tokens.len()];
    for (i, t) in tokens.iter().enumerate() {
        counts[i] = freq.get(t.as_str()).copied().unwrap_or(0);
    }
    let mut rest: Vec<(&str, u64)> = freq
        .into_iter()
        .filter(|(t, c)| *c >= min_count && !is_entity_marker(t) && ![PAD, UNK, START, END].contains(t))
        .collect();
    rest.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    for (t, c) in rest {
        tokens.push(t.to_string());
        counts.push(c);
    }
    Vocabulary::from_parts(tokens, counts, num_entities)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_count_filters() {
        let corpus = vec![Document::from_strs("x", &["a a b"])];
        let v = build_vocab(&corpus, 2, 0);
        assert!(v.get("a").is_some());
        assert_eq!(v.encode("b"), Vocabulary::UNK_ID);
        assert_eq!(v.decode(0), PAD);
        let v1 = build_vocab(&corpus, 1, 0);
        assert!(v1.get("b").is_some());
    }

    #[test]
    fn empty_corpus_is_reserved_only() {
        let v = build_vocab(&[], 1, 3);
        assert_eq!(v.len(), 7);
        assert_eq!(v.decode(4), "entity0");
        assert!(v.is_entity_id(6) && !v.is_entity_id(7));
    }

    #[test]
    fn counts_match_brute_force_and_roundtrip() {
        let corpus = vec![
            Document::from_strs("x", &["the cat sat", "the dog ran ran"]).with_highlights(&["dog ran"]),
            Document::from_strs("y", &["a cat and the dog"]),
        ];
        let v = build_vocab(&corpus, 1, 2);
        let all: Vec<&String> =
            corpus.iter().flat_map(|d| d.sentences.iter().chain(d.highlights()).flatten()).collect();
        for (i, t) in v.tokens().iter().enumerate().skip(v.num_reserved()) {
            let brute = all.iter().filter(|x| **x == t).count() as u64;
            assert_eq!(v.counts[i], brute, "{t}");
            assert_eq!(v.encode(v.decode(i)), i);
        }
        // ties on frequency break lexicographically
        assert_eq!(v.decode(v.num_reserved()), "dog");
    }
}
