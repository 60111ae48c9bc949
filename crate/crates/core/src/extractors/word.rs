//! Word extractor: an LSTM decoder with two-level attention (sentences, then
//! the words the document may emit), trained by negative sampling.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::datagen::WordExtractionExample;
use crate::encoder::{Encoder, ModelConfig};
use crate::error::{Error, Result};
use crate::extractors::beam::{beam_decode, greedy_decode, Hypothesis, StepModel};
use crate::extractors::train::{prepare_ids, EpochStats, TrainConfig};
use crate::scalar::Scalar;
use crate::tensor::{
    dropout, AdamState, Graph, Linear, LstmCell, Mode, ParamGrads, ParamId, ParamStore, RngStream, Tensor, Var,
};
use crate::textprep::{permute_entity_indices, BatchLimits, Document, Vocabulary, STOP_WORDS};

/// Output symbols for one document: its own words, the stop-words present in
/// the vocabulary, and END, as ascending vocabulary ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Support {
    pub ids: Vec<usize>,
    index: HashMap<usize, usize>,
}

impl Support {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn end_position(&self) -> usize {
        self.index[&Vocabulary::END_ID]
    }
}

pub fn build_support(doc_ids: &[Vec<usize>], vocab: &Vocabulary) -> Support {
    let mut ids: Vec<usize> = doc_ids
        .iter()
        .flatten()
        .copied()
        .chain(STOP_WORDS.iter().filter_map(|w| vocab.get(w)))
        .filter(|&id| id != Vocabulary::PAD_ID && id != Vocabulary::START_ID)
        .chain([Vocabulary::END_ID])
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let index = ids.iter().enumerate().map(|(p, &id)| (id, p)).collect();
    Support { ids, index }
}

/// Draws noise positions from `(count + 1)^0.75` over a support.
#[derive(Clone, Debug)]
pub struct NoiseSampler {
    dist: WeightedIndex<f64>,
    len: usize,
}

impl NoiseSampler {
    pub fn new(support: &Support, vocab: &Vocabulary) -> Result<Self> {
        let weights: Vec<f64> = support
            .ids
            .iter()
            .map(|&id| (vocab.counts.get(id).copied().unwrap_or(0) as f64 + 1.0).powf(0.75))
            .collect();
        let dist = WeightedIndex::new(&weights).map_err(|_| Error::EmptySupport)?;
        Ok(Self { dist, len: support.len() })
    }

    /// `k` positions with replacement, none equal to `target`; `None` when
    /// `k` is not smaller than the support (use the full softmax instead).
    pub fn draw<R: Rng + ?Sized>(&self, target: usize, k: usize, rng: &mut R) -> Option<Vec<usize>> {
        if k >= self.len {
            return None;
        }
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let j = self.dist.sample(rng);
            if j != target {
                out.push(j);
            }
        }
        Some(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordExtractor {
    pub encoder: Encoder,
    pub decoder: LstmCell,
    /// `W_e`, `W_r`, `z`: sentence-level attention.
    pub sent_query: Linear,
    pub sent_key: Linear,
    pub z: ParamId,
    /// `W_e'`, `W_r'`, `v`: word-level attention.
    pub word_query: Linear,
    pub word_key: Linear,
    pub v: ParamId,
}

/// Per-document tensors shared by every decoder step.
#[derive(Clone, Copy, Debug)]
pub struct WordContext {
    /// Encoder states `[m, H]`.
    pub states: Var,
    /// `W_r h_j`, `[m, A]`.
    pub sent_keys: Var,
    /// `W_r' w_i` over the support, `[V, A]`.
    pub word_keys: Var,
    pub h0: Var,
    pub c0: Var,
}

/// Outputs of one decoder step.
#[derive(Clone, Copy, Debug)]
pub struct DecoderStep {
    pub h: Var,
    pub c: Var,
    /// Sentence attention `b`, `[1, m]`.
    pub sentence_weights: Var,
    /// `h~ = sum_j b_j h_j`, `[1, H]`.
    pub context: Var,
    /// Word scores `u`, `[1, V]`.
    pub logits: Var,
}

impl WordExtractor {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, config: &ModelConfig, rng: &mut R) -> Self {
        let encoder = Encoder::new(store, config, rng);
        let (r, h, d) = (config.init_range, config.doc_dim, config.word_dim);
        let input = if config.feed_attention { d + h } else { d };
        let decoder = LstmCell::new(store, "dec_lstm", input, h, r, rng);
        let sent_query = Linear::new(store, "att_we", h, h, false, r, rng);
        let sent_key = Linear::new(store, "att_wr", h, h, false, r, rng);
        let z = store.add_uniform("att_z", &[1, h], r, rng);
        let word_query = Linear::new(store, "att_we2", h, h, false, r, rng);
        let word_key = Linear::new(store, "att_wr2", d, h, false, r, rng);
        let v = store.add_uniform("att_v", &[1, h], r, rng);
        Self { encoder, decoder, sent_query, sent_key, z, word_query, word_key, v }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.encoder.config
    }

    /// Reads the document and precomputes the attention keys.
    pub fn context<'p, T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        doc: &[Vec<usize>],
        support: &Support,
        mode: Mode,
        rng: &mut R,
    ) -> Result<WordContext> {
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        let enc = self.encoder.encode(g, store, doc, mode, rng)?;
        let sent_keys = self.sent_key.forward(g, store, enc.states)?;
        let table = g.param(store, self.encoder.embedding);
        let words = g.embedding(table, &support.ids, Some(Vocabulary::PAD_ID))?;
        let word_keys = self.word_key.forward(g, store, words)?;
        Ok(WordContext { states: enc.states, sent_keys, word_keys, h0: enc.last_h, c0: enc.last_c })
    }

    /// Sentence attention followed by word attention for decoder state `h`.
    pub fn attend<'p, T: Scalar>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        ctx: &WordContext,
        h: Var,
    ) -> Result<(Var, Var, Var)> {
        let q = self.sent_query.forward(g, store, h)?;
        let pre = g.add_row(ctx.sent_keys, q)?;
        let act = g.tanh(pre);
        let z = g.param(store, self.z);
        let a = g.matmul_bt(z, act)?;
        let m = g.dims(a).1;
        let b = g.masked_softmax(a, &vec![true; m])?;
        let context = g.matmul(b, ctx.states)?;
        let q2 = self.word_query.forward(g, store, context)?;
        let pre2 = g.add_row(ctx.word_keys, q2)?;
        let act2 = g.tanh(pre2);
        let v = g.param(store, self.v);
        let u = g.matmul_bt(v, act2)?;
        Ok((b, context, u))
    }

    /// Feeds `prev_id` (and, if configured, the previous `h~`) to the decoder
    /// and attends.
    #[allow(clippy::too_many_arguments)]
    pub fn step<'p, T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        ctx: &WordContext,
        prev_id: usize,
        prev_context: Option<Var>,
        state: (Var, Var),
        mode: Mode,
        rng: &mut R,
    ) -> Result<DecoderStep> {
        let table = g.param(store, self.encoder.embedding);
        let emb = g.embedding(table, &[prev_id], Some(Vocabulary::PAD_ID))?;
        let emb = dropout(g, emb, self.config().dropout, mode, rng)?;
        let x = if self.config().feed_attention {
            let prev = match prev_context {
                Some(p) => p,
                None => g.zeros(1, self.config().doc_dim),
            };
            g.concat_cols(&[emb, prev])?
        } else {
            emb
        };
        let (h, c) = self.decoder.step(g, store, x, state.0, state.1)?;
        let (sentence_weights, context, logits) = self.attend(g, store, ctx, h)?;
        Ok(DecoderStep { h, c, sentence_weights, context, logits })
    }

    /// Teacher-forced loss of `target` followed by END, summed over steps.
    /// Noise-sampled when `sampler` is given and `k` is below the support
    /// size, full softmax cross-entropy otherwise. Also returns the number of
    /// steps whose highest-scoring word is the gold word.
    #[allow(clippy::too_many_arguments)]
    pub fn loss<'p, T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        doc: &[Vec<usize>],
        support: &Support,
        target: &[usize],
        sampler: Option<&NoiseSampler>,
        k: usize,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Var, usize)> {
        let ctx = self.context(g, store, doc, support, mode, rng)?;
        let all = vec![true; support.len()];
        let mut state = (ctx.h0, ctx.c0);
        let mut prev = Vocabulary::START_ID;
        let mut prev_context = None;
        let mut terms = Vec::with_capacity(target.len() + 1);
        let mut hits = 0;
        for &out in target.iter().chain([Vocabulary::END_ID].iter()) {
            let pos = support
                .position(out)
                .ok_or_else(|| Error::Shape(format!("target id {out} outside the document support")))?;
            let s = self.step(g, store, &ctx, prev, prev_context, state, mode, rng)?;
            if argmax(g.value(s.logits)) == pos {
                hits += 1;
            }
            let noise = sampler.and_then(|smp| smp.draw(pos, k, rng));
            let term = match noise {
                Some(noise) => g.neg_sampling(s.logits, pos, &noise)?,
                None => g.softmax_xent(s.logits, &all, pos)?,
            };
            terms.push(term);
            state = (s.h, s.c);
            prev = out;
            prev_context = Some(s.context);
        }
        Ok((g.add_all(&terms)?, hits))
    }
}

fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Decoder state carried by beam hypotheses.
#[derive(Clone, Debug)]
pub struct WordDecoderState<T> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
    pub context: Option<Tensor<T>>,
    /// Sentence attention of the step that produced this state.
    pub sentence_weights: Vec<f64>,
}

/// Inference wrapper over one document with precomputed keys.
#[derive(Clone, Debug)]
pub struct WordDecoder<'a, T: Scalar> {
    model: &'a WordExtractor,
    store: &'a ParamStore<T>,
    pub support: Support,
    states: Tensor<T>,
    sent_keys: Tensor<T>,
    word_keys: Tensor<T>,
    h0: Tensor<T>,
    c0: Tensor<T>,
}

impl<'a, T: Scalar> WordDecoder<'a, T> {
    pub fn new(
        model: &'a WordExtractor,
        store: &'a ParamStore<T>,
        doc: &[Vec<usize>],
        support: Support,
    ) -> Result<Self> {
        let mut g = Graph::new();
        let ctx = model.context(&mut g, store, doc, &support, Mode::Eval, &mut RngStream::new(0))?;
        Ok(Self {
            model,
            store,
            support,
            states: g.tensor(ctx.states),
            sent_keys: g.tensor(ctx.sent_keys),
            word_keys: g.tensor(ctx.word_keys),
            h0: g.tensor(ctx.h0),
            c0: g.tensor(ctx.c0),
        })
    }

    /// Prepares a document with `limits` and builds its support.
    pub fn for_document(
        model: &'a WordExtractor,
        store: &'a ParamStore<T>,
        doc: &Document,
        vocab: &Vocabulary,
        limits: BatchLimits,
    ) -> Result<Self> {
        let prep = prepare_ids(doc, vocab, limits);
        if prep.ids.is_empty() {
            return Err(Error::Shape(format!("document `{}` has no sentences", doc.id)));
        }
        let support = build_support(&[doc.tokens().map(|t| vocab.encode(t)).collect()], vocab);
        Self::new(model, store, &prep.ids, support)
    }

    /// Vocabulary ids of a hypothesis without the END symbol.
    pub fn token_ids(&self, symbols: &[usize]) -> Vec<usize> {
        let end = self.support.end_position();
        symbols.iter().filter(|&&s| s != end).map(|&s| self.support.ids[s]).collect()
    }

    pub fn beam(&self, width: usize, max_len: usize) -> Result<Vec<Hypothesis<WordDecoderState<T>>>> {
        beam_decode(self, width, max_len)
    }

    pub fn greedy(&self, max_len: usize) -> Result<Hypothesis<WordDecoderState<T>>> {
        greedy_decode(self, max_len)
    }
}

impl<T: Scalar> StepModel for WordDecoder<'_, T> {
    type State = WordDecoderState<T>;

    fn initial_state(&self) -> Result<Self::State> {
        Ok(WordDecoderState { h: self.h0.clone(), c: self.c0.clone(), context: None, sentence_weights: Vec::new() })
    }

    fn num_symbols(&self) -> usize {
        self.support.len()
    }

    fn end_symbol(&self) -> usize {
        self.support.end_position()
    }

    fn step(&self, state: &Self::State, prev: Option<usize>) -> Result<(Vec<f64>, Self::State)> {
        let mut g = Graph::new();
        let ctx = WordContext {
            states: g.constant(self.states.clone()),
            sent_keys: g.constant(self.sent_keys.clone()),
            word_keys: g.constant(self.word_keys.clone()),
            h0: g.constant(state.h.clone()),
            c0: g.constant(state.c.clone()),
        };
        let prev_id = prev.map_or(Vocabulary::START_ID, |p| self.support.ids[p]);
        let prev_context = state.context.clone().map(|t| g.constant(t));
        let s = self.model.step(
            &mut g,
            self.store,
            &ctx,
            prev_id,
            prev_context,
            (ctx.h0, ctx.c0),
            Mode::Eval,
            &mut RngStream::new(0),
        )?;
        let logits: Vec<f64> = g.value(s.logits).iter().map(|x| x.to_f64_lossy()).collect();
        let next = WordDecoderState {
            h: g.tensor(s.h),
            c: g.tensor(s.c),
            context: Some(g.tensor(s.context)),
            sentence_weights: g.value(s.sentence_weights).iter().map(|x| x.to_f64_lossy()).collect(),
        };
        Ok((log_softmax(&logits), next))
    }
}

fn log_softmax(u: &[f64]) -> Vec<f64> {
    let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + u.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    u.iter().map(|x| x - lse).collect()
}

struct PreparedExample {
    doc: Vec<Vec<usize>>,
    support: Support,
    target: Vec<usize>,
}

fn prepare_example(ex: &WordExtractionExample, vocab: &Vocabulary, limits: BatchLimits) -> PreparedExample {
    let doc = prepare_ids(&ex.document, vocab, limits).ids;
    let support = build_support(&[ex.document.tokens().map(|t| vocab.encode(t)).collect()], vocab);
    PreparedExample { doc, support, target: vocab.encode_all(&ex.target) }
}

/// Entity markers in the document and the target are renamed consistently.
fn permute_example<R: Rng + ?Sized>(ex: &WordExtractionExample, rng: &mut R) -> WordExtractionExample {
    let mut doc = ex.document.clone();
    doc.highlights = Some(vec![ex.target.clone()]);
    let mut doc = permute_entity_indices(&doc, rng);
    let target = doc.highlights.take().and_then(|mut h| h.pop()).unwrap_or_default();
    doc.highlights = ex.document.highlights.clone();
    WordExtractionExample { document: doc, target, substitutions: ex.substitutions.clone() }
}

/// Epoch-granular trainer; see [`crate::extractors::SentenceTrainer`] for
/// the resume contract.
#[derive(Clone, Debug)]
pub struct WordTrainer<T: Scalar> {
    pub model: WordExtractor,
    pub store: ParamStore<T>,
    pub adam: AdamState<T>,
    pub rng: RngStream,
    pub epoch: usize,
    pub history: Vec<EpochStats>,
    pub config: TrainConfig,
}

impl<T: Scalar> WordTrainer<T> {
    pub fn new(model_config: &ModelConfig, config: TrainConfig) -> Result<Self> {
        model_config.validate()?;
        let mut rng = RngStream::new(config.seed);
        let mut store = ParamStore::new();
        let model = WordExtractor::new(&mut store, model_config, &mut rng);
        let adam = config.adam(&store);
        Ok(Self { model, store, adam, rng, epoch: 0, history: Vec::new(), config })
    }

    pub fn train_epoch(&mut self, examples: &[WordExtractionExample], vocab: &Vocabulary) -> Result<EpochStats> {
        if examples.is_empty() {
            return Err(Error::NoTrainingData);
        }
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut loss_sum, mut hits, mut steps, mut used) = (0.0, 0usize, 0usize, 0usize);
        for chunk in order.chunks(self.config.batch_size.max(1)) {
            let mut grads = ParamGrads::zeros_like(&self.store);
            let mut in_batch = 0;
            for &i in chunk {
                let ex = if self.config.permute_entities {
                    permute_example(&examples[i], &mut self.rng)
                } else {
                    examples[i].clone()
                };
                let prep = prepare_example(&ex, vocab, self.config.limits());
                if prep.doc.is_empty() {
                    continue;
                }
                let sampler = NoiseSampler::new(&prep.support, vocab)?;
                if self.config.noise_samples >= prep.support.len() {
                    log::debug!("`{}`: support of {} words, using the full softmax", ex.id(), prep.support.len());
                }
                let mut g = Graph::new();
                let (loss, h) = self.model.loss(
                    &mut g,
                    &self.store,
                    &prep.doc,
                    &prep.support,
                    &prep.target,
                    Some(&sampler),
                    self.config.noise_samples,
                    Mode::Train,
                    &mut self.rng,
                )?;
                loss_sum += g.scalar(loss).to_f64_lossy();
                hits += h;
                steps += prep.target.len() + 1;
                grads.add_assign(&g.backward(loss)?.params(&self.store));
                in_batch += 1;
            }
            if in_batch == 0 {
                continue;
            }
            used += in_batch;
            grads.scale(T::one() / T::of(in_batch as f64));
            grads.clip_global_norm(T::of(self.config.clip_norm));
            self.adam.step(&mut self.store, &grads)?;
        }
        if used == 0 {
            return Err(Error::NoTrainingData);
        }
        let stats =
            EpochStats { epoch: self.epoch, loss: loss_sum / used as f64, accuracy: hits as f64 / steps.max(1) as f64 };
        log::info!("train-we epoch {} loss {:.4} token-acc {:.4}", stats.epoch, stats.loss, stats.accuracy);
        self.epoch += 1;
        self.history.push(stats.clone());
        Ok(stats)
    }

    /// Greedy output for one example as tokens.
    pub fn greedy_tokens(&self, ex: &WordExtractionExample, vocab: &Vocabulary, max_len: usize) -> Result<Vec<String>> {
        let dec = WordDecoder::for_document(&self.model, &self.store, &ex.document, vocab, self.config.limits())?;
        let hyp = dec.greedy(max_len)?;
        Ok(dec.token_ids(&hyp.tokens).into_iter().map(|id| vocab.decode(id).to_string()).collect())
    }
}
