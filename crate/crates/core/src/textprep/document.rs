use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::tokenize::{split_sentences, tokenize_cased};

/// Which token sequence list a mention lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionPart {
    Sentences,
    Highlights,
}

/// One replaced entity occurrence, kept so anonymization is exactly reversible.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub part: MentionPart,
    pub sentence: usize,
    pub token: usize,
    pub surface: Vec<String>,
}

/// A tokenized document: the unit of training and inference.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub highlights: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u8>>,
    /// Entity marker to the surface string of its first mention.
    #[serde(default, rename = "entities", skip_serializing_if = "BTreeMap::is_empty")]
    pub entity_map: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mentions: Vec<EntityMention>,
}

impl Document {
    pub fn new(id: impl Into<String>, sentences: Vec<Vec<String>>) -> Self {
        Self { id: id.into(), sentences, ..Default::default() }
    }

    /// Builds a document from whitespace-separated sentence strings.
    pub fn from_strs(id: &str, sentences: &[&str]) -> Self {
        Self::new(id, sentences.iter().map(|s| s.split_whitespace().map(String::from).collect()).collect())
    }

    pub fn with_highlights(mut self, highlights: &[&str]) -> Self {
        self.highlights = Some(highlights.iter().map(|s| s.split_whitespace().map(String::from).collect()).collect());
        self
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn highlights(&self) -> &[Vec<String>] {
        self.highlights.as_deref().unwrap_or(&[])
    }

    pub fn tokens(&self) -> impl Iterator<Item = &String> {
        self.sentences.iter().flatten()
    }

    /// Checks the label-length and entity-map invariants.
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = &self.labels {
            if l.len() != self.sentences.len() {
                return Err(Error::Shape(format!(
                    "document `{}`: {} labels for {} sentences",
                    self.id,
                    l.len(),
                    self.sentences.len()
                )));
            }
        }
        let all = self.sentences.iter().chain(self.highlights()).flatten();
        for t in all {
            if crate::textprep::is_entity_marker(t) && !self.entity_map.contains_key(t) {
                return Err(Error::Shape(format!("document `{}`: marker {t} missing from entity map", self.id)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum SentenceField {
    Tokens(Vec<String>),
    Text(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum SentencesField {
    Text(String),
    List(Vec<SentenceField>),
}

/// Corpus line as read from disk: sentences may be token arrays, sentence
/// strings, or one running text.
#[derive(Clone, Debug, Deserialize)]
pub struct RawDocument {
    pub id: String,
    sentences: SentencesField,
    #[serde(default)]
    highlights: Option<SentencesField>,
    #[serde(default)]
    labels: Option<Vec<u8>>,
    #[serde(default)]
    entities: BTreeMap<String, String>,
    #[serde(default)]
    mentions: Vec<EntityMention>,
}

fn to_token_lists(f: SentencesField) -> Vec<Vec<String>> {
    match f {
        SentencesField::Text(t) => split_sentences(&t).iter().map(|s| tokenize_cased(s)).collect(),
        SentencesField::List(items) => items
            .into_iter()
            .map(|s| match s {
                SentenceField::Tokens(t) => t,
                SentenceField::Text(t) => tokenize_cased(&t),
            })
            .collect(),
    }
}

impl From<RawDocument> for Document {
    fn from(r: RawDocument) -> Self {
        Document {
            id: r.id,
            sentences: to_token_lists(r.sentences),
            highlights: r.highlights.map(to_token_lists),
            labels: r.labels,
            entity_map: r.entities,
            mentions: r.mentions,
        }
    }
}

/// Reads a JSON Lines corpus. Blank lines are skipped; errors carry the line number.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path)?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        let doc = Document::from(raw);
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_jsonl<S: Serialize>(path: impl AsRef<Path>, items: &[S]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
