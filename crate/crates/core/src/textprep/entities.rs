//! Heuristic entity anonymization.
//!
//! Entities are maximal runs of capitalized tokens. A run that starts a
//! sentence and is a single common word ("He", "The", "Yesterday") is not an
//! entity unless the same surface also appears capitalized mid-sentence.
//! Identical runs, and runs that are a contiguous part of an earlier entity
//! ("Talia" after "Daniel Talia"), share one marker. Markers are numbered in
//! order of first mention: `entity0`, `entity1`, ...

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::textprep::document::{Document, EntityMention, MentionPart};

const NOT_ENTITIES: &[&str] = &[
    "a",
    "an",
    "the",
    "he",
    "she",
    "it",
    "they",
    "we",
    "i",
    "you",
    "his",
    "her",
    "its",
    "their",
    "our",
    "my",
    "this",
    "that",
    "these",
    "those",
    "there",
    "here",
    "in",
    "on",
    "at",
    "of",
    "for",
    "to",
    "from",
    "by",
    "with",
    "and",
    "but",
    "or",
    "if",
    "when",
    "while",
    "after",
    "before",
    "as",
    "so",
    "yet",
    "then",
    "now",
    "today",
    "yesterday",
    "tomorrow",
    "what",
    "who",
    "why",
    "how",
    "where",
    "which",
    "some",
    "many",
    "most",
    "all",
    "no",
    "not",
    "one",
    "two",
    "three",
    "mr",
    "mrs",
    "ms",
    "dr",
    "is",
    "was",
    "are",
    "were",
    "be",
    "also",
    "however",
    "meanwhile",
    "last",
    "next",
    "every",
    "each",
    "both",
    "more",
    "other",
    "police",
    "officials",
];

/// True for tokens of the form `entity<digits>`.
pub fn is_entity_marker(t: &str) -> bool {
    t.strip_prefix("entity").is_some_and(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()))
}

fn is_capitalized(t: &str) -> bool {
    let mut chars = t.chars();
    chars.next().is_some_and(|c| c.is_uppercase()) && t.chars().any(char::is_alphabetic) && !is_entity_marker(t)
}

fn is_stoplike(t: &str) -> bool {
    NOT_ENTITIES.contains(&t.trim_end_matches('.').to_lowercase().as_str())
}

/// Candidate runs `(start, end)` in one sentence.
fn runs(sentence: &[String]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < sentence.len() {
        if is_capitalized(&sentence[i]) {
            let mut j = i;
            while j < sentence.len() && is_capitalized(&sentence[j]) {
                j += 1;
            }
            let mut s = i;
            while s < j && is_stoplike(&sentence[s]) {
                s += 1;
            }
            if s < j {
                out.push((s, j));
            }
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

struct Registry {
    entities: Vec<Vec<String>>,
}

impl Registry {
    fn lookup(&self, run: &[String]) -> Option<usize> {
        if let Some(k) = self.entities.iter().position(|e| e.as_slice() == run) {
            return Some(k);
        }
        self.entities.iter().position(|e| e.windows(run.len()).any(|w| w == run))
    }
}

/// Replaces entity runs with `entityK` markers in sentences and highlights,
/// filling `entity_map` and the mention log.
pub fn anonymize_entities(doc: &Document) -> Document {
    let all_parts: Vec<(MentionPart, &Vec<Vec<String>>)> = std::iter::once((MentionPart::Sentences, &doc.sentences))
        .chain(doc.highlights.as_ref().map(|h| (MentionPart::Highlights, h)))
        .collect();

    // surfaces that occur capitalized away from sentence start
    let mut mid_sentence: HashSet<Vec<String>> = HashSet::new();
    for (_, sents) in &all_parts {
        for s in sents.iter() {
            for (a, b) in runs(s) {
                if a > 0 {
                    mid_sentence.insert(s[a..b].to_vec());
                }
            }
        }
    }

    let mut reg = Registry { entities: Vec::new() };
    let mut out = doc.clone();
    out.mentions.clear();
    let existing = doc.entity_map.len();
    let mut new_parts: Vec<Vec<Vec<String>>> = Vec::new();
    for (part, sents) in &all_parts {
        let mut rewritten = Vec::with_capacity(sents.len());
        for (si, s) in sents.iter().enumerate() {
            let mut toks = Vec::with_capacity(s.len());
            let mut cursor = 0;
            for (a, b) in runs(s) {
                let run = &s[a..b];
                let known = reg.lookup(run);
                let accept = known.is_some() || b - a > 1 || a > 0 || mid_sentence.contains(run);
                if !accept {
                    continue;
                }
                let k = known.unwrap_or_else(|| {
                    reg.entities.push(run.to_vec());
                    reg.entities.len() - 1
                });
                toks.extend_from_slice(&s[cursor..a]);
                out.mentions.push(EntityMention {
                    part: *part,
                    sentence: si,
                    token: toks.len(),
                    surface: run.to_vec(),
                });
                toks.push(format!("entity{}", k + existing));
                cursor = b;
            }
            toks.extend_from_slice(&s[cursor..]);
            rewritten.push(toks);
        }
        new_parts.push(rewritten);
    }
    let mut parts = new_parts.into_iter();
    out.sentences = parts.next().unwrap_or_default();
    if out.highlights.is_some() {
        out.highlights = parts.next();
    }
    for (k, e) in reg.entities.iter().enumerate() {
        out.entity_map.insert(format!("entity{}", k + existing), e.join(" "));
    }
    out
}

/// Restores surface tokens from the mention log (or, when absent, from the
/// entity map).
pub fn deanonymize(doc: &Document) -> Document {
    let mut out = doc.clone();
    let restore = |part: MentionPart, sents: &mut Vec<Vec<String>>| {
        for (si, s) in sents.iter_mut().enumerate() {
            let mut restored = Vec::with_capacity(s.len());
            for (ti, t) in s.iter().enumerate() {
                let mention = doc.mentions.iter().find(|m| m.part == part && m.sentence == si && m.token == ti);
                match (mention, doc.entity_map.get(t)) {
                    (Some(m), _) => restored.extend(m.surface.iter().cloned()),
                    (None, Some(surface)) if is_entity_marker(t) => {
                        restored.extend(surface.split_whitespace().map(String::from))
                    }
                    _ => restored.push(t.clone()),
                }
            }
            *s = restored;
        }
    };
    restore(MentionPart::Sentences, &mut out.sentences);
    if let Some(h) = out.highlights.as_mut() {
        restore(MentionPart::Highlights, h);
    }
    out.mentions.clear();
    out.entity_map.clear();
    out
}

/// Applies a fresh random bijection over the document's own entity markers.
pub fn permute_entity_indices<R: Rng + ?Sized>(doc: &Document, rng: &mut R) -> Document {
    let markers: Vec<String> = doc.entity_map.keys().cloned().collect();
    if markers.len() < 2 {
        return doc.clone();
    }
    let mut shuffled = markers.clone();
    shuffled.shuffle(rng);
    let map: BTreeMap<&str, &str> =
        markers.iter().map(String::as_str).zip(shuffled.iter().map(String::as_str)).collect();
    let rename = |t: &String| map.get(t.as_str()).map_or_else(|| t.clone(), |s| s.to_string());
    let mut out = doc.clone();
    for s in out.sentences.iter_mut().chain(out.highlights.iter_mut().flatten()) {
        for t in s.iter_mut() {
            *t = rename(t);
        }
    }
    out.entity_map = doc.entity_map.iter().map(|(k, v)| (rename(k), v.clone())).collect();
    out
}
