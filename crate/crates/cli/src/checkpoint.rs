//! Binary checkpoints: magic bytes, a format version, a length-prefixed JSON
//! header, then little-endian `f32` parameters followed by the Adam moments.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{Context, Result};
use hiersum_core::encoder::ModelConfig;
use hiersum_core::extractors::{CurriculumSchedule, EpochStats, SentenceTrainer, TrainConfig, WordTrainer};
use hiersum_core::tensor::{AdamState, ParamStore, RngStream, RNG_ALGORITHM};
use hiersum_core::textprep::Vocabulary;
use hiersum_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const MAGIC: &[u8; 8] = b"HIERSUM\x01";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    SentenceExtractor,
    WordExtractor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub schedule: Option<CurriculumSchedule>,
    pub run: RunConfig,
    pub epoch: usize,
    pub history: Vec<EpochStats>,
    pub rng_algorithm: String,
    pub rng_seed: u64,
    /// Decimal string: the word position does not fit a JSON number.
    pub rng_word_pos: String,
    pub adam_steps: u64,
    pub vocab: Vocabulary,
    pub params: Vec<TensorMeta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<Vec<f32>>,
    pub adam_m: Vec<Vec<f32>>,
    pub adam_v: Vec<Vec<f32>>,
}

fn mismatch(msg: impl Into<String>) -> anyhow::Error {
    CoreError::CheckpointMismatch(msg.into()).into()
}

fn write_f32s(out: &mut Vec<u8>, xs: &[f32]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn read_f32s(bytes: &[u8], pos: &mut usize, n: usize) -> Result<Vec<f32>> {
    let end = *pos + 4 * n;
    let chunk = bytes.get(*pos..end).ok_or_else(|| mismatch("truncated tensor data"))?;
    *pos = end;
    Ok(chunk.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

struct Parts<'a> {
    kind: ModelKind,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    schedule: Option<CurriculumSchedule>,
    store: &'a ParamStore<f32>,
    adam: &'a AdamState<f32>,
    rng: &'a RngStream,
    epoch: usize,
    history: &'a [EpochStats],
}

impl Checkpoint {
    fn from_parts(p: Parts<'_>, run: &RunConfig, vocab: &Vocabulary) -> Self {
        let entries = p.store.entries();
        let state = p.rng.state();
        Self {
            header: CheckpointHeader {
                kind: p.kind,
                model: p.model.clone(),
                train: p.train.clone(),
                schedule: p.schedule,
                run: run.clone(),
                epoch: p.epoch,
                history: p.history.to_vec(),
                rng_algorithm: RNG_ALGORITHM.to_string(),
                rng_seed: state.seed,
                rng_word_pos: state.word_pos.to_string(),
                adam_steps: p.adam.t,
                vocab: vocab.clone(),
                params: entries
                    .iter()
                    .map(|e| TensorMeta { name: e.name.clone(), shape: e.tensor.shape().to_vec() })
                    .collect(),
            },
            params: entries.iter().map(|e| e.tensor.data().to_vec()).collect(),
            adam_m: p.adam.m.clone(),
            adam_v: p.adam.v.clone(),
        }
    }

    pub fn from_sentence_trainer(t: &SentenceTrainer<f32>, run: &RunConfig, vocab: &Vocabulary) -> Self {
        let parts = Parts {
            kind: ModelKind::SentenceExtractor,
            model: t.model.config(),
            train: &t.config,
            schedule: Some(t.schedule),
            store: &t.store,
            adam: &t.adam,
            rng: &t.rng,
            epoch: t.epoch,
            history: &t.history,
        };
        Self::from_parts(parts, run, vocab)
    }

    pub fn from_word_trainer(t: &WordTrainer<f32>, run: &RunConfig, vocab: &Vocabulary) -> Self {
        let parts = Parts {
            kind: ModelKind::WordExtractor,
            model: t.model.config(),
            train: &t.config,
            schedule: None,
            store: &t.store,
            adam: &t.adam,
            rng: &t.rng,
            epoch: t.epoch,
            history: &t.history,
        };
        Self::from_parts(parts, run, vocab)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.header.vocab
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.header.kind != kind {
            return Err(mismatch(format!("expected a {kind:?} checkpoint, found {:?}", self.header.kind)));
        }
        Ok(())
    }

    fn restore_into(&self, store: &mut ParamStore<f32>, adam: &mut AdamState<f32>) -> Result<RngStream> {
        if store.len() != self.params.len() {
            return Err(mismatch(format!("{} tensors in checkpoint, model has {}", self.params.len(), store.len())));
        }
        for (id, meta) in store.ids().collect::<Vec<_>>().into_iter().zip(&self.header.params) {
            let t = store.get(id);
            if store.name(id) != meta.name || t.shape() != meta.shape.as_slice() {
                return Err(mismatch(format!(
                    "tensor `{}` {:?} does not match checkpoint `{}` {:?}",
                    store.name(id),
                    t.shape(),
                    meta.name,
                    meta.shape
                )));
            }
            store.get_mut(id).data_mut().copy_from_slice(&self.params[id.0]);
        }
        adam.m = self.adam_m.clone();
        adam.v = self.adam_v.clone();
        adam.t = self.header.adam_steps;
        if self.header.rng_algorithm != RNG_ALGORITHM {
            return Err(mismatch(format!("random stream `{}` is not supported", self.header.rng_algorithm)));
        }
        let pos: u128 = self.header.rng_word_pos.parse().map_err(|_| mismatch("bad random stream position"))?;
        Ok(RngStream::from_state(self.header.rng_seed, pos))
    }

    pub fn sentence_trainer(&self) -> Result<SentenceTrainer<f32>> {
        self.expect_kind(ModelKind::SentenceExtractor)?;
        let schedule = self.header.schedule.ok_or_else(|| mismatch("missing curriculum schedule"))?;
        let mut t = SentenceTrainer::new(&self.header.model, self.header.train.clone(), schedule)?;
        t.rng = self.restore_into(&mut t.store, &mut t.adam)?;
        t.epoch = self.header.epoch;
        t.history = self.header.history.clone();
        Ok(t)
    }

    pub fn word_trainer(&self) -> Result<WordTrainer<f32>> {
        self.expect_kind(ModelKind::WordExtractor)?;
        let mut t = WordTrainer::new(&self.header.model, self.header.train.clone())?;
        t.rng = self.restore_into(&mut t.store, &mut t.adam)?;
        t.epoch = self.header.epoch;
        t.history = self.header.history.clone();
        Ok(t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(header.len() + 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for group in [&self.params, &self.adam_m, &self.adam_v] {
            for t in group {
                write_f32s(&mut out, t);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(mismatch("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(mismatch(format!("format version {version}, expected {VERSION}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let header_bytes = bytes.get(20..20 + len).ok_or_else(|| mismatch("truncated header"))?;
        let mut header: CheckpointHeader = serde_json::from_slice(header_bytes).context("checkpoint header")?;
        header.vocab.reindex();
        let mut pos = 20 + len;
        let mut groups = Vec::with_capacity(3);
        for _ in 0..3 {
            let g = header
                .params
                .iter()
                .map(|m| read_f32s(bytes, &mut pos, m.shape.iter().product()))
                .collect::<Result<Vec<_>>>()?;
            groups.push(g);
        }
        if pos != bytes.len() {
            return Err(mismatch("trailing bytes after tensor data"));
        }
        let adam_v = groups.pop().expect("3 groups");
        let adam_m = groups.pop().expect("3 groups");
        let params = groups.pop().expect("3 groups");
        Ok(Self { header, params, adam_m, adam_v })
    }

    /// Writes through a temporary file so an interrupted save leaves the old
    /// checkpoint intact.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(&self.to_bytes()?)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hiersum_core::textprep::{build_vocab, Document};

    fn small() -> (SentenceTrainer<f32>, Vocabulary, RunConfig, Vec<Document>) {
        let mut d = Document::from_strs("d", &["a b c", "d e", "f a"]);
        d.labels = Some(vec![1, 0, 1]);
        let vocab = build_vocab(std::slice::from_ref(&d), 1, 0);
        let mut run = RunConfig::default();
        run.apply_text("word_dim=3\nsent_dim=4\ndoc_dim=5\nmlp_dim=4\nkernel_widths=1,2\nbatch_size=1").unwrap();
        let t =
            SentenceTrainer::new(&run.model_config(vocab.len()), run.train_config(), run.schedule().unwrap()).unwrap();
        (t, vocab, run, vec![d])
    }

    #[test]
    fn bytes_round_trip() {
        let (mut t, vocab, run, docs) = small();
        t.train_epoch(&docs, &vocab).unwrap();
        let ck = Checkpoint::from_sentence_trainer(&t, &run, &vocab);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.vocab().get("a"), vocab.get("a"));
    }

    #[test]
    fn version_and_kind_checked() {
        let (t, vocab, run, _) = small();
        let ck = Checkpoint::from_sentence_trainer(&t, &run, &vocab);
        let mut bytes = ck.to_bytes().unwrap();
        bytes[8] = 9;
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("checkpoint-mismatch"), "{err}");
        assert!(ck.word_trainer().is_err());
        let mut short = ck.to_bytes().unwrap();
        short.pop();
        assert!(Checkpoint::from_bytes(&short).is_err());
    }

    #[test]
    fn one_step_after_round_trip_is_bit_identical() {
        let (mut t, vocab, run, docs) = small();
        t.train_epoch(&docs, &vocab).unwrap();
        let ck =
            Checkpoint::from_bytes(&Checkpoint::from_sentence_trainer(&t, &run, &vocab).to_bytes().unwrap()).unwrap();
        let mut resumed = ck.sentence_trainer().unwrap();
        t.train_epoch(&docs, &vocab).unwrap();
        resumed.train_epoch(&docs, &vocab).unwrap();
        let a = Checkpoint::from_sentence_trainer(&t, &run, &vocab).to_bytes().unwrap();
        let b = Checkpoint::from_sentence_trainer(&resumed, &run, &vocab).to_bytes().unwrap();
        assert_eq!(a, b);
    }
}
