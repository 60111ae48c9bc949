//! Sentence and word extractors on top of the document reader, with
//! training loops, decoding, and reranking.

mod beam;
mod rerank;
mod sentence;
mod train;
mod word;

pub use beam::{beam_decode, greedy_decode, Hypothesis, StepModel};
pub use rerank::{
    candidate_features, rerank, tune_rerank_weights, NBestEntry, NBestItem, RerankCandidate, RerankerWeights,
    RERANK_GRID,
};
pub use sentence::{
    select_summary_sentences, CurriculumSchedule, Gating, SentenceExtractor, SentenceTrainer, StepOutput,
};
pub use train::{prepare_ids, EpochStats, PreparedDocument, TrainConfig};
pub use word::{
    build_support, NoiseSampler, Support, WordContext, WordDecoder, WordDecoderState, WordExtractor, WordTrainer,
};
