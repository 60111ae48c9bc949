//! Training-data construction: rule-based sentence labels from highlights,
//! word-extraction targets restricted to document words, and a synthetic
//! corpus generator.

mod fixture;
mod rules;
mod stem;
mod wordex;

pub use fixture::{generate_fixture_corpus, FixtureParams};
pub use rules::{
    label_document, score_sentence, tune_rule_weights, LabelRuleWeights, SentenceFeatures, TunedRules, WEIGHT_GRID,
};
pub use stem::stem;
pub use wordex::{
    build_word_extraction_example, nearest_neighbors, ConstructionReport, Substitution, WordExtractionExample,
    WordExtractionOutcome,
};
