//! Synthetic news-like corpus with known summary-worthy sentences.
//!
//! Positive sentences follow `ENT VERB DET NOUN in the PLACE [, SOURCE said] .`
//! built from an event vocabulary; their highlight is the verbatim prefix
//! `ENT VERB DET NOUN`. Negative sentences come from a disjoint filler
//! vocabulary and may also mention entities, so entity presence alone is not
//! a cue. Documents are produced already anonymized.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::textprep::Document;

const EVENT_VERBS: &[&str] =
    &["won", "lost", "announced", "launched", "signed", "rejected", "approved", "sold", "bought", "blocked"];
const EVENT_NOUNS: &[&str] =
    &["contract", "election", "merger", "lawsuit", "treaty", "award", "bill", "deal", "strike", "appeal"];
const PLACES: &[&str] = &["city", "capital", "court", "parliament", "council", "region"];
const SOURCES: &[&str] = &["officials", "reports", "sources", "aides"];
const FILLER_NOUNS: &[&str] = &["weather", "traffic", "crowd", "market", "river", "morning", "road", "garden"];
const FILLER_VERBS: &[&str] = &["seemed", "remained", "stayed", "looked", "felt"];
const FILLER_ADJS: &[&str] = &["calm", "quiet", "busy", "mild", "cold", "grey", "normal"];
const TIMES: &[&str] = &["today", "yesterday", "overnight", "later", "again"];
const NAMES: &[&str] =
    &["Ann Berg", "Carl Olsen", "Maria Lopez", "Daniel Talia", "Yuki Sato", "Omar Haddad", "Lena Fischer", "Ravi Iyer"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureParams {
    pub min_sentences: usize,
    pub max_sentences: usize,
    /// Probability that a sentence is summary-worthy.
    pub positive_rate: f64,
    /// Entity markers available per document.
    pub entities_per_doc: usize,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self { min_sentences: 5, max_sentences: 9, positive_rate: 0.3, entities_per_doc: 3 }
    }
}

fn pick<'a, R: Rng + ?Sized>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs[rng.gen_range(0..xs.len())]
}

/// Generates `n_docs` anonymized documents with labels, highlights and an
/// entity map. Every document has at least one positive sentence.
pub fn generate_fixture_corpus<R: Rng + ?Sized>(rng: &mut R, n_docs: usize, params: &FixtureParams) -> Vec<Document> {
    let entities = params.entities_per_doc.max(1);
    (0..n_docs)
        .map(|k| {
            let m = rng.gen_range(params.min_sentences.max(1)..=params.max_sentences.max(params.min_sentences.max(1)));
            let mut labels: Vec<u8> = (0..m).map(|_| u8::from(rng.gen_bool(params.positive_rate))).collect();
            if !labels.contains(&1) {
                let at = rng.gen_range(0..m);
                labels[at] = 1;
            }
            let mut sentences = Vec::with_capacity(m);
            let mut highlights = Vec::new();
            for &label in &labels {
                let ent = format!("entity{}", rng.gen_range(0..entities));
                let s: Vec<String> = if label == 1 {
                    let head = vec![
                        ent,
                        pick(rng, EVENT_VERBS).to_string(),
                        pick(rng, &["the", "a"]).to_string(),
                        pick(rng, EVENT_NOUNS).to_string(),
                    ];
                    highlights.push(head.clone());
                    let mut s = head;
                    s.extend(["in", "the", pick(rng, PLACES)].map(String::from));
                    if rng.gen_bool(0.5) {
                        s.extend([",", pick(rng, SOURCES), "said"].map(String::from));
                    }
                    s.push(".".into());
                    s
                } else {
                    let subject: Vec<String> =
                        if rng.gen_bool(0.3) { vec![ent] } else { vec!["the".into(), pick(rng, FILLER_NOUNS).into()] };
                    let mut s = subject;
                    s.extend(
                        [pick(rng, FILLER_VERBS), pick(rng, FILLER_ADJS), pick(rng, TIMES), "."].map(String::from),
                    );
                    s
                };
                sentences.push(s);
            }
            let mut names: Vec<&str> = NAMES.to_vec();
            names.shuffle(rng);
            let mut doc = Document::new(format!("fx{k:04}"), sentences);
            doc.entity_map =
                (0..entities).map(|e| (format!("entity{e}"), names[e % names.len()].to_string())).collect();
            doc.highlights = Some(highlights);
            doc.labels = Some(labels);
            doc
        })
        .collect()
}
