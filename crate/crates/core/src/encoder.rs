//! Document reader: a multi-width convolutional sentence encoder followed by
//! a forward LSTM over sentence vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{dropout, Graph, LstmCell, Mode, ParamId, ParamStore, Var};
use crate::textprep::{Batch, EmbeddingTable, Vocabulary};

/// Model dimensions and regularization shared by both extractors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub word_dim: usize,
    /// Feature maps per kernel width; also the sentence vector size.
    pub sent_dim: usize,
    /// Hidden size of every LSTM.
    pub doc_dim: usize,
    pub kernel_widths: Vec<usize>,
    /// Hidden width of the sentence-extractor MLP.
    pub mlp_dim: usize,
    pub dropout: f64,
    pub init_range: f64,
    /// Feed the previous sentence-level attention vector to the word decoder.
    pub feed_attention: bool,
}

impl ModelConfig {
    /// Full-size dimensions for a given vocabulary.
    pub fn full(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            word_dim: 150,
            sent_dim: 300,
            doc_dim: 750,
            kernel_widths: (1..=7).collect(),
            mlp_dim: 750,
            dropout: 0.5,
            init_range: 0.05,
            feed_attention: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.vocab_size < 4 {
            return bad("vocab_size must cover the reserved symbols");
        }
        if self.word_dim == 0 || self.sent_dim == 0 || self.doc_dim == 0 || self.mlp_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.kernel_widths.is_empty() || self.kernel_widths.contains(&0) {
            return bad("kernel widths must be a non-empty list of positive integers");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.init_range > 0.0 && self.init_range.is_finite()) {
            return bad("init_range must be positive");
        }
        Ok(())
    }
}

/// Kernels of one width: `[F, width * d]` (each row a flattened `width x d`
/// kernel) and biases `[F]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvBank {
    pub width: usize,
    pub kernels: ParamId,
    pub bias: ParamId,
}

/// Parameters of the reader, registered in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub config: ModelConfig,
    pub embedding: ParamId,
    pub banks: Vec<ConvBank>,
    pub lstm: LstmCell,
}

/// Reader output for one document. `sentences` is `[m, F]`, `states` is
/// `[m, H]`; `last_h`/`last_c` are the final LSTM state.
#[derive(Clone, Debug)]
pub struct DocumentEncoding {
    pub sentence_vectors: Vec<Var>,
    pub sentences: Var,
    pub states: Var,
    pub last_h: Var,
    pub last_c: Var,
}

impl DocumentEncoding {
    pub fn len(&self) -> usize {
        self.sentence_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentence_vectors.is_empty()
    }
}

impl Encoder {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, config: &ModelConfig, rng: &mut R) -> Self {
        let r = config.init_range;
        let embedding = store.add_uniform("embedding", &[config.vocab_size, config.word_dim], r, rng);
        let banks = config
            .kernel_widths
            .iter()
            .map(|&c| ConvBank {
                width: c,
                kernels: store.add_uniform(format!("conv{c}.k"), &[config.sent_dim, c * config.word_dim], r, rng),
                bias: store.add_uniform(format!("conv{c}.b"), &[config.sent_dim], r, rng),
            })
            .collect();
        let lstm = LstmCell::new(store, "doc_lstm", config.sent_dim, config.doc_dim, r, rng);
        Self { config: config.clone(), embedding, banks, lstm }
    }

    /// Copies a loaded table (pretrained and random rows) into the embedding parameter.
    pub fn load_embeddings<T: Scalar>(&self, store: &mut ParamStore<T>, table: &EmbeddingTable<T>) -> Result<()> {
        let d = self.config.word_dim;
        if table.dim() != d || table.rows() != self.config.vocab_size {
            return Err(Error::Shape(format!(
                "embedding table {}x{} for model {}x{d}",
                table.rows(),
                table.dim(),
                self.config.vocab_size
            )));
        }
        store.get_mut(self.embedding).data_mut().copy_from_slice(table.matrix.data());
        Ok(())
    }

    /// Sentence vector `[1, F]`: for every width, narrow convolution plus
    /// max-over-time per kernel; the per-width vectors are summed. Sentences
    /// shorter than a width are PAD-extended to that width.
    pub fn encode_sentence<'p, T: Scalar>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        ids: &[usize],
    ) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::EmptySentence);
        }
        let table = g.param(store, self.embedding);
        let words = g.embedding(table, ids, Some(Vocabulary::PAD_ID))?;
        let mut per_width = Vec::with_capacity(self.banks.len());
        for bank in &self.banks {
            let input = if ids.len() >= bank.width {
                words
            } else {
                let mut padded = ids.to_vec();
                padded.resize(bank.width, Vocabulary::PAD_ID);
                g.embedding(table, &padded, Some(Vocabulary::PAD_ID))?
            };
            let k = g.param(store, bank.kernels);
            let b = g.param(store, bank.bias);
            let fmap = g.conv_narrow(input, k, b, bank.width)?;
            per_width.push(g.max_over_time(fmap)?);
        }
        g.add_all(&per_width)
    }

    /// Runs the document LSTM from a zero state over the given sentence
    /// vectors. Dropout (train mode) is applied to each LSTM input.
    pub fn encode_document<'p, T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        sentence_vectors: &[Var],
        mode: Mode,
        rng: &mut R,
    ) -> Result<DocumentEncoding> {
        if sentence_vectors.is_empty() {
            return Err(Error::Shape("document has no sentences".into()));
        }
        let hid = self.config.doc_dim;
        let mut h = g.zeros(1, hid);
        let mut c = g.zeros(1, hid);
        let mut hs = Vec::with_capacity(sentence_vectors.len());
        for &s in sentence_vectors {
            let x = dropout(g, s, self.config.dropout, mode, rng)?;
            (h, c) = self.lstm.step(g, store, x, h, c)?;
            hs.push(h);
        }
        let sentences = g.stack_rows(sentence_vectors)?;
        let states = g.stack_rows(&hs)?;
        Ok(DocumentEncoding { sentence_vectors: sentence_vectors.to_vec(), sentences, states, last_h: h, last_c: c })
    }

    /// Sentence encoder and document encoder for one document of id lists.
    pub fn encode<'p, T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        sentences: &[Vec<usize>],
        mode: Mode,
        rng: &mut R,
    ) -> Result<DocumentEncoding> {
        let vecs = sentences.iter().map(|s| self.encode_sentence(g, store, s)).collect::<Result<Vec<_>>>()?;
        self.encode_document(g, store, &vecs, mode, rng)
    }

    /// Masked batched reader over a padded batch (evaluation mode). The LSTM
    /// advances all documents together; a document past its last real
    /// sentence keeps its state. Returns one encoding per document,
    /// restricted to its real sentences.
    pub fn encode_batch<'p, T: Scalar>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        batch: &Batch,
    ) -> Result<Vec<DocumentEncoding>> {
        let (n, steps) = (batch.num_docs, batch.max_sentences);
        let (f, hid) = (self.config.sent_dim, self.config.doc_dim);
        let zero_sentence = g.zeros(1, f);
        let mut vectors: Vec<Vec<Var>> = vec![Vec::new(); n];
        let mut inputs: Vec<Var> = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut rows = Vec::with_capacity(n);
            for (d, vs) in vectors.iter_mut().enumerate() {
                let ids = batch.sentence_ids(d, t);
                if batch.sentence_real(d, t) && !ids.is_empty() {
                    let v = self.encode_sentence(g, store, ids)?;
                    vs.push(v);
                    rows.push(v);
                } else {
                    rows.push(zero_sentence);
                }
            }
            inputs.push(g.stack_rows(&rows)?);
        }
        let mut h = g.zeros(n, hid);
        let mut c = g.zeros(n, hid);
        let mut per_doc_h: Vec<Vec<Var>> = vec![Vec::new(); n];
        let mut last: Vec<(Var, Var)> = Vec::with_capacity(n);
        for (t, &x) in inputs.iter().enumerate() {
            let (h_new, c_new) = self.lstm.step(g, store, x, h, c)?;
            let live: Vec<bool> = (0..n).map(|d| batch.sentence_real(d, t) && batch.word_len(d, t) > 0).collect();
            h = g.blend_rows(h_new, h, &live)?;
            c = g.blend_rows(c_new, c, &live)?;
            for (d, hs) in per_doc_h.iter_mut().enumerate() {
                if live[d] {
                    hs.push(g.slice_rows(h, d, 1)?);
                }
            }
        }
        for d in 0..n {
            last.push((g.slice_rows(h, d, 1)?, g.slice_rows(c, d, 1)?));
        }
        let mut out = Vec::with_capacity(n);
        for d in 0..n {
            if vectors[d].is_empty() {
                return Err(Error::Shape(format!("batch document {d} has no sentences")));
            }
            out.push(DocumentEncoding {
                sentences: g.stack_rows(&vectors[d])?,
                states: g.stack_rows(&per_doc_h[d])?,
                sentence_vectors: std::mem::take(&mut vectors[d]),
                last_h: last[d].0,
                last_c: last[d].1,
            });
        }
        Ok(out)
    }
}
