//! Hierarchical neural extractive summarization.
//!
//! A convolutional sentence encoder and LSTM document encoder read a
//! document; a sentence extractor labels sentences and a word extractor
//! generates summaries restricted to the document's own words. Dataset
//! construction, the LEAD and logistic-regression baselines, and ROUGE
//! scoring complete the pipeline.
//!
//! All numeric code is generic over [`Scalar`]: models train in `f32` and
//! the same graphs are re-evaluated in `f64` for gradient checks.

pub mod baselines;
pub mod datagen;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod extractors;
pub mod scalar;
pub mod tensor;
pub mod textprep;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Training-precision tensor.
pub type Tensor32 = tensor::Tensor<f32>;
/// Reference-precision tensor used by gradient checks.
pub type Tensor64 = tensor::Tensor<f64>;
pub type ParamStore32 = tensor::ParamStore<f32>;
pub type ParamStore64 = tensor::ParamStore<f64>;
pub type Graph32<'p> = tensor::Graph<'p, f32>;
pub type Graph64<'p> = tensor::Graph<'p, f64>;
pub type AdamState32 = tensor::AdamState<f32>;
