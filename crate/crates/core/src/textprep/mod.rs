//! Text preprocessing: tokenization, entity anonymization, vocabulary,
//! embeddings, and padded batches.

mod batch;
mod document;
mod embeddings;
mod entities;
mod tokenize;
mod vocab;

pub use batch::{pad_batch, Batch, BatchLimits};
pub use document::{read_corpus, write_jsonl, Document, EntityMention, MentionPart, RawDocument};
pub use embeddings::{cosine, load_embeddings, parse_embeddings, EmbeddingTable, Provenance};
pub use entities::{anonymize_entities, deanonymize, is_entity_marker, permute_entity_indices};
pub use tokenize::{normalize_token, prepare_document, split_sentences, tokenize, tokenize_cased, NUM_TOKEN};
pub use vocab::{build_vocab, Vocabulary, END, PAD, START, STOP_WORDS, UNK};
