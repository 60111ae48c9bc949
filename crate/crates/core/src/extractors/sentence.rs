//! Sentence extractor: an LSTM that revisits the document sentence by
//! sentence, gated by the previous decision, with an MLP over
//! `[extractor state : encoder state]`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, ModelConfig};
use crate::error::{Error, Result};
use crate::eval::LimitSpec;
use crate::extractors::train::{prepare_ids, EpochStats, PreparedDocument, TrainConfig};
use crate::scalar::{sigmoid, Scalar};
use crate::tensor::{dropout, AdamState, Graph, Linear, LstmCell, Mode, ParamGrads, ParamStore, RngStream, Var};
use crate::textprep::{permute_entity_indices, Document, Vocabulary};

#[derive(Clone, Debug, PartialEq)]
pub struct SentenceExtractor {
    pub encoder: Encoder,
    pub lstm: LstmCell,
    pub hidden: Linear,
    pub out: Linear,
}

/// One extractor step: new LSTM state, output logit `[1,1]`, and its probability.
#[derive(Clone, Copy, Debug)]
pub struct StepOutput<T> {
    pub h: Var,
    pub c: Var,
    pub logit: Var,
    pub prob: T,
}

/// Where the gate `p_{t-1}` comes from.
#[derive(Clone, Copy, Debug)]
pub enum Gating<'a> {
    /// Gold label of the previous sentence (teacher forcing).
    Gold(&'a [u8]),
    /// The previous predicted probability.
    Predicted,
    /// Gold with probability `gold_prob`, otherwise predicted; drawn per step.
    Scheduled { labels: &'a [u8], gold_prob: f64 },
}

/// Probability of feeding the gold label at a given epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CurriculumSchedule {
    /// 1 at epoch 0, linear to 0 at half of `total_epochs`, then 0.
    Linear {
        total_epochs: usize,
    },
    Constant(f64),
}

impl CurriculumSchedule {
    pub fn gold_prob(&self, epoch: usize) -> f64 {
        match *self {
            Self::Linear { total_epochs } => {
                let half = (total_epochs / 2).max(1) as f64;
                (1.0 - epoch as f64 / half).max(0.0)
            }
            Self::Constant(p) => p.clamp(0.0, 1.0),
        }
    }
}

impl SentenceExtractor {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, config: &ModelConfig, rng: &mut R) -> Self {
        let encoder = Encoder::new(store, config, rng);
        let r = config.init_range;
        let lstm = LstmCell::new(store, "ext_lstm", config.sent_dim, config.doc_dim, r, rng);
        let hidden = Linear::new(store, "ext_mlp", 2 * config.doc_dim, config.mlp_dim, true, r, rng);
        let out = Linear::new(store, "ext_out", config.mlp_dim, 1, true, r, rng);
        Self { encoder, lstm, hidden, out }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.encoder.config
    }

    /// `hbar_t = LSTM(p_prev * s_prev, hbar_{t-1})`, `p_t = sigmoid(MLP(hbar_t : h_t))`.
    /// `s_prev = None` is the start convention (zero input).
    #[allow(clippy::too_many_arguments)]
    pub fn extract_step<'p, T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        p_prev: T,
        s_prev: Option<Var>,
        state: (Var, Var),
        h_t: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<StepOutput<T>> {
        let x = match s_prev {
            Some(s) => g.scale(s, p_prev),
            None => g.zeros(1, self.config().sent_dim),
        };
        let (h, c) = self.lstm.step(g, store, x, state.0, state.1)?;
        let joined = g.concat_cols(&[h, h_t])?;
        let hid = self.hidden.forward(g, store, joined)?;
        let hid = g.tanh(hid);
        let hid = dropout(g, hid, self.config().dropout, mode, rng)?;
        let logit = self.out.forward(g, store, hid)?;
        let prob = sigmoid(g.scalar(logit));
        Ok(StepOutput { h, c, logit, prob })
    }

    /// Reads the document and runs the extractor over every sentence,
    /// starting from the final encoder state. The gate is a constant in the
    /// graph (no gradient flows through `p_{t-1}`).
    pub fn forward<'p, T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        doc: &[Vec<usize>],
        gating: Gating<'_>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Vec<StepOutput<T>>> {
        let enc = self.encoder.encode(g, store, doc, mode, rng)?;
        let mut state = (enc.last_h, enc.last_c);
        let mut outs: Vec<StepOutput<T>> = Vec::with_capacity(doc.len());
        for t in 0..doc.len() {
            let h_t = g.slice_rows(enc.states, t, 1)?;
            let (p_prev, s_prev) = if t == 0 {
                (T::zero(), None)
            } else {
                let predicted = outs[t - 1].prob;
                let p = match gating {
                    Gating::Gold(labels) => T::of(f64::from(labels[t - 1])),
                    Gating::Predicted => predicted,
                    Gating::Scheduled { labels, gold_prob } => {
                        if rng.gen_bool(gold_prob) {
                            T::of(f64::from(labels[t - 1]))
                        } else {
                            predicted
                        }
                    }
                };
                (p, Some(enc.sentence_vectors[t - 1]))
            };
            let step = self.extract_step(g, store, p_prev, s_prev, state, h_t, mode, rng)?;
            state = (step.h, step.c);
            outs.push(step);
        }
        Ok(outs)
    }

    /// Summed binary cross-entropy over sentences.
    pub fn loss<'p, T: Scalar>(&self, g: &mut Graph<'p, T>, steps: &[StepOutput<T>], labels: &[u8]) -> Result<Var> {
        if labels.len() != steps.len() {
            return Err(Error::Shape(format!("{} labels for {} sentences", labels.len(), steps.len())));
        }
        let terms = steps
            .iter()
            .zip(labels)
            .map(|(s, &y)| g.bce_with_logits(s.logit, T::of(f64::from(y))))
            .collect::<Result<Vec<_>>>()?;
        g.add_all(&terms)
    }

    /// Inference probabilities (evaluation mode, predicted gating).
    pub fn probabilities<T: Scalar>(&self, store: &ParamStore<T>, doc: &[Vec<usize>]) -> Result<Vec<f64>> {
        if doc.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let mut rng = RngStream::new(0);
        let steps = self.forward(&mut g, store, doc, Gating::Predicted, Mode::Eval, &mut rng)?;
        Ok(steps.iter().map(|s| s.prob.to_f64_lossy()).collect())
    }

    /// Per-sentence probabilities aligned with the original sentences;
    /// sentences dropped by truncation or emptiness get 0.
    pub fn score_document<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        doc: &Document,
        vocab: &Vocabulary,
        limits: crate::textprep::BatchLimits,
    ) -> Result<Vec<f64>> {
        let prep = prepare_ids(doc, vocab, limits);
        let probs = self.probabilities(store, &prep.ids)?;
        let mut out = vec![0.0; doc.sentences.len()];
        for (p, &i) in probs.iter().zip(&prep.kept) {
            out[i] = *p;
        }
        Ok(out)
    }
}

/// Top-`k` sentences by probability (ties to the lower index), returned in
/// document order. While the concatenated summary exceeds `limit`, the
/// selected sentence with the lowest probability is dropped (ties: the later
/// one).
pub fn select_summary_sentences(probs: &[f64], sentences: &[Vec<String>], k: usize, limit: LimitSpec) -> Vec<usize> {
    let n = probs.len().min(sentences.len());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.into_iter().take(k).collect();
    chosen.sort_unstable();
    loop {
        let tokens: Vec<String> = chosen.iter().flat_map(|&i| sentences[i].iter().cloned()).collect();
        if chosen.is_empty() || limit.fits(&tokens) {
            return chosen;
        }
        let worst = (0..chosen.len())
            .min_by(|&a, &b| probs[chosen[a]].total_cmp(&probs[chosen[b]]).then(chosen[b].cmp(&chosen[a])))
            .expect("non-empty");
        chosen.remove(worst);
    }
}

/// Epoch-granular trainer. All randomness (shuffling, entity permutation,
/// curriculum draws, dropout) comes from `rng`, so saving the store, the
/// Adam state, and `rng.state()` at an epoch boundary resumes exactly.
#[derive(Clone, Debug)]
pub struct SentenceTrainer<T: Scalar> {
    pub model: SentenceExtractor,
    pub store: ParamStore<T>,
    pub adam: AdamState<T>,
    pub rng: RngStream,
    pub epoch: usize,
    pub history: Vec<EpochStats>,
    pub schedule: CurriculumSchedule,
    pub config: TrainConfig,
}

impl<T: Scalar> SentenceTrainer<T> {
    /// Fresh model initialized from `config.seed`.
    pub fn new(model_config: &ModelConfig, config: TrainConfig, schedule: CurriculumSchedule) -> Result<Self> {
        model_config.validate()?;
        let mut rng = RngStream::new(config.seed);
        let mut store = ParamStore::new();
        let model = SentenceExtractor::new(&mut store, model_config, &mut rng);
        let adam = config.adam(&store);
        Ok(Self { model, store, adam, rng, epoch: 0, history: Vec::new(), schedule, config })
    }

    /// One pass over `docs` in shuffled mini-batches.
    pub fn train_epoch(&mut self, docs: &[Document], vocab: &Vocabulary) -> Result<EpochStats> {
        if docs.is_empty() {
            return Err(Error::NoTrainingData);
        }
        if let Some(d) = docs.iter().find(|d| d.labels.is_none()) {
            return Err(Error::MissingLabels(d.id.clone()));
        }
        let gold_prob = self.schedule.gold_prob(self.epoch);
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut loss_sum, mut correct, mut total, mut used) = (0.0, 0usize, 0usize, 0usize);
        for chunk in order.chunks(self.config.batch_size.max(1)) {
            let mut grads = ParamGrads::zeros_like(&self.store);
            let mut in_batch = 0;
            for &i in chunk {
                let doc = if self.config.permute_entities {
                    permute_entity_indices(&docs[i], &mut self.rng)
                } else {
                    docs[i].clone()
                };
                let prep = prepare_ids(&doc, vocab, self.config.limits());
                if prep.ids.is_empty() {
                    continue;
                }
                let (loss, g, hits) = self.doc_gradients(&prep, gold_prob)?;
                loss_sum += loss;
                correct += hits;
                total += prep.ids.len();
                grads.add_assign(&g);
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
        let stats = EpochStats {
            epoch: self.epoch,
            loss: loss_sum / used as f64,
            accuracy: correct as f64 / total.max(1) as f64,
        };
        log::info!(
            "train-se epoch {} loss {:.4} acc {:.4} g {:.3}",
            stats.epoch,
            stats.loss,
            stats.accuracy,
            gold_prob
        );
        self.epoch += 1;
        self.history.push(stats.clone());
        Ok(stats)
    }

    fn doc_gradients(&mut self, prep: &PreparedDocument, gold_prob: f64) -> Result<(f64, ParamGrads<T>, usize)> {
        let labels = prep.labels.as_deref().expect("checked by caller");
        let mut g = Graph::new();
        let gating = if gold_prob >= 1.0 { Gating::Gold(labels) } else { Gating::Scheduled { labels, gold_prob } };
        let steps = self.model.forward(&mut g, &self.store, &prep.ids, gating, Mode::Train, &mut self.rng)?;
        let loss = self.model.loss(&mut g, &steps, labels)?;
        let hits = steps.iter().zip(labels).filter(|(s, &y)| u8::from(s.prob >= T::of(0.5)) == y).count();
        let grads = g.backward(loss)?.params(&self.store);
        Ok((g.scalar(loss).to_f64_lossy(), grads, hits))
    }

    /// Label accuracy in evaluation mode with predicted gating.
    pub fn accuracy(&self, docs: &[Document], vocab: &Vocabulary) -> Result<f64> {
        let (mut correct, mut total) = (0, 0);
        for d in docs {
            let prep = prepare_ids(d, vocab, self.config.limits());
            let labels = prep.labels.as_ref().ok_or_else(|| Error::MissingLabels(d.id.clone()))?;
            let probs = self.model.probabilities(&self.store, &prep.ids)?;
            correct += probs.iter().zip(labels).filter(|(p, &y)| u8::from(**p >= 0.5) == y).count();
            total += labels.len();
        }
        Ok(correct as f64 / total.max(1) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, GradCheckOptions};

    fn tiny(vocab: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab,
            word_dim: 4,
            sent_dim: 5,
            doc_dim: 6,
            kernel_widths: vec![1, 2],
            mlp_dim: 7,
            dropout: 0.0,
            init_range: 0.3,
            feed_attention: false,
        }
    }

    #[test]
    fn zero_parameters_give_one_half() {
        let mut store = ParamStore::<f64>::new();
        let m = SentenceExtractor::new(&mut store, &tiny(10), &mut RngStream::new(1));
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let probs = m.probabilities(&store, &[vec![4, 5], vec![6], vec![7, 8, 9]]).unwrap();
        assert_eq!(probs, vec![0.5; 3]);
    }

    #[test]
    fn zero_gate_blocks_previous_sentence() {
        let mut store = ParamStore::<f64>::new();
        let m = SentenceExtractor::new(&mut store, &tiny(10), &mut RngStream::new(2));
        let run = |s_val: f64| {
            let mut g = Graph::new();
            let s = g.constant(crate::tensor::Tensor::row(vec![s_val; 5]));
            let h0 = g.zeros(1, 6);
            let c0 = g.zeros(1, 6);
            let ht = g.constant(crate::tensor::Tensor::row(vec![0.1; 6]));
            let out =
                m.extract_step(&mut g, &store, 0.0, Some(s), (h0, c0), ht, Mode::Eval, &mut RngStream::new(0)).unwrap();
            (g.value(out.h).to_vec(), out.prob)
        };
        assert_eq!(run(1.0), run(-3.0));
    }

    #[test]
    fn full_graph_gradients_match_finite_differences() {
        let mut store = ParamStore::<f64>::new();
        let m = SentenceExtractor::new(&mut store, &tiny(10), &mut RngStream::new(3));
        let doc = vec![vec![4, 5, 6], vec![7, 8], vec![9, 4]];
        let labels = [1u8, 0, 1];
        let report = grad_check(&store, &GradCheckOptions::default(), |g, s| {
            let steps = m.forward(g, s, &doc, Gating::Gold(&labels), Mode::Eval, &mut RngStream::new(0))?;
            m.loss(g, &steps, &labels)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn curriculum_schedule() {
        let s = CurriculumSchedule::Linear { total_epochs: 10 };
        let vals: Vec<f64> = (0..10).map(|e| s.gold_prob(e)).collect();
        assert_eq!(vals[0], 1.0);
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(vals[5], 0.0);
        assert_eq!(vals[9], 0.0);
        assert_eq!(CurriculumSchedule::Constant(1.0).gold_prob(99), 1.0);
    }

    #[test]
    fn selection_rules() {
        let sents: Vec<Vec<String>> =
            ["a b", "c d e", "f", "g h i j"].iter().map(|s| s.split_whitespace().map(String::from).collect()).collect();
        assert_eq!(select_summary_sentences(&[0.9, 0.1, 0.8, 0.7], &sents, 3, LimitSpec::None), vec![0, 2, 3]);
        assert_eq!(select_summary_sentences(&[0.5; 4], &sents, 3, LimitSpec::None), vec![0, 1, 2]);
        assert!(select_summary_sentences(&[], &[], 3, LimitSpec::None).is_empty());
        // 2 + 1 + 4 = 7 words; a 4-word limit drops the 0.7 sentence
        assert_eq!(select_summary_sentences(&[0.9, 0.1, 0.8, 0.7], &sents, 3, LimitSpec::Words(4)), vec![0, 2]);
    }

    /// Subset of the top-k with the largest kept probability mass that fits.
    fn best_subset(probs: &[f64], sents: &[Vec<String>], chosen: &[usize], limit: LimitSpec) -> Vec<usize> {
        let mut best: (f64, Vec<usize>) = (-1.0, vec![]);
        for mask in 0u32..(1 << chosen.len()) {
            let subset: Vec<usize> = (0..chosen.len()).filter(|b| mask & (1 << b) != 0).map(|b| chosen[b]).collect();
            let toks: Vec<String> = subset.iter().flat_map(|&i| sents[i].clone()).collect();
            let mass: f64 = subset.iter().map(|&i| probs[i]).sum();
            if limit.fits(&toks) && mass > best.0 {
                best = (mass, subset);
            }
        }
        best.1
    }

    #[test]
    fn limit_drop_matches_exhaustive_subset_oracle() {
        let sents: Vec<Vec<String>> =
            ["a b", "c d e", "f", "g h i j"].iter().map(|s| s.split_whitespace().map(String::from).collect()).collect();
        let probs = [0.9, 0.1, 0.8, 0.7];
        for limit in [LimitSpec::Words(4), LimitSpec::Words(3), LimitSpec::Words(7), LimitSpec::Bytes(5)] {
            let got = select_summary_sentences(&probs, &sents, 3, limit);
            assert_eq!(got, best_subset(&probs, &sents, &[0, 2, 3], limit), "{limit}");
        }
    }

    #[test]
    fn teacher_forcing_flag_equals_unit_schedule() {
        let mut store = ParamStore::<f64>::new();
        let m = SentenceExtractor::new(&mut store, &tiny(10), &mut RngStream::new(4));
        let doc = vec![vec![4, 5, 6], vec![7, 8], vec![9, 4]];
        let labels = [0u8, 1, 1];
        let loss = |gating: Gating<'_>| {
            let mut g = Graph::new();
            let steps = m.forward(&mut g, &store, &doc, gating, Mode::Train, &mut RngStream::new(5)).unwrap();
            let l = m.loss(&mut g, &steps, &labels).unwrap();
            g.scalar(l)
        };
        assert_eq!(loss(Gating::Gold(&labels)), loss(Gating::Scheduled { labels: &labels, gold_prob: 1.0 }));
    }

    #[test]
    fn single_document_loss_decreases() {
        let mut doc = Document::from_strs("d", &["the cat sat", "a dog ran fast", "birds sing"]);
        doc.labels = Some(vec![1, 0, 1]);
        let vocab = crate::textprep::build_vocab(std::slice::from_ref(&doc), 1, 0);
        let cfg =
            TrainConfig { epochs: 200, batch_size: 1, lr: 0.01, permute_entities: false, ..TrainConfig::default() };
        let mut trainer: SentenceTrainer<f32> =
            SentenceTrainer::new(&tiny(vocab.len()), cfg, CurriculumSchedule::Linear { total_epochs: 200 }).unwrap();
        let docs = [doc];
        let first = trainer.train_epoch(&docs, &vocab).unwrap().loss;
        for _ in 1..200 {
            trainer.train_epoch(&docs, &vocab).unwrap();
        }
        let last = trainer.history.last().unwrap().loss;
        assert!(last < first, "{last} vs {first}");
        assert_eq!(trainer.accuracy(&docs, &vocab).unwrap(), 1.0);
    }

    #[test]
    fn unlabeled_corpus_rejected() {
        let doc = Document::from_strs("d", &["x y"]);
        let vocab = crate::textprep::build_vocab(std::slice::from_ref(&doc), 1, 0);
        let mut t: SentenceTrainer<f32> =
            SentenceTrainer::new(&tiny(vocab.len()), TrainConfig::default(), CurriculumSchedule::Constant(1.0))
                .unwrap();
        assert!(matches!(t.train_epoch(&[doc], &vocab), Err(Error::MissingLabels(_))));
        assert!(matches!(t.train_epoch(&[], &vocab), Err(Error::NoTrainingData)));
    }
}
