//! Run configuration: `key = value` text files with flag overrides.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hiersum_core::encoder::ModelConfig;
use hiersum_core::eval::LimitSpec;
use hiersum_core::extractors::{CurriculumSchedule, TrainConfig};
use serde::{Deserialize, Serialize};

/// Every tunable setting, with defaults for full-size runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub word_dim: usize,
    pub sent_dim: usize,
    pub doc_dim: usize,
    pub kernel_widths: Vec<usize>,
    pub mlp_dim: usize,
    pub dropout: f64,
    pub init_range: f64,
    pub feed_attention: bool,

    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub max_sentences: usize,
    pub max_words: usize,
    pub permute_entities: bool,
    pub noise_samples: usize,
    /// `linear` or `constant:P`
    pub curriculum: String,

    pub min_count: u64,
    /// Entity markers reserved in the vocabulary; 0 derives it from the corpus.
    pub num_entities: usize,

    pub top_k: usize,
    pub beam_width: usize,
    pub max_len: usize,
    pub limit: LimitSpec,

    pub neighbors: usize,
    pub tau: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            word_dim: 150,
            sent_dim: 300,
            doc_dim: 750,
            kernel_widths: (1..=7).collect(),
            mlp_dim: 750,
            dropout: 0.5,
            init_range: 0.05,
            feed_attention: false,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            clip_norm: t.clip_norm,
            seed: t.seed,
            max_sentences: t.max_sentences,
            max_words: t.max_words,
            permute_entities: t.permute_entities,
            noise_samples: t.noise_samples,
            curriculum: "linear".into(),
            min_count: 1,
            num_entities: 0,
            top_k: 3,
            beam_width: 5,
            max_len: 30,
            limit: LimitSpec::None,
            neighbors: 10,
            tau: 0.6,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| anyhow::anyhow!("invalid value `{value}` for `{key}`: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => bail!("invalid value `{value}` for `{key}`: expected true or false"),
    }
}

impl RunConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "word_dim" => self.word_dim = parse(key, v)?,
            "sent_dim" => self.sent_dim = parse(key, v)?,
            "doc_dim" => self.doc_dim = parse(key, v)?,
            "kernel_widths" => {
                self.kernel_widths = v.split(',').map(|w| parse(key, w.trim())).collect::<Result<Vec<usize>>>()?
            }
            "mlp_dim" => self.mlp_dim = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "init_range" => self.init_range = parse(key, v)?,
            "feed_attention" => self.feed_attention = parse_bool(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "beta1" => self.beta1 = parse(key, v)?,
            "beta2" => self.beta2 = parse(key, v)?,
            "epsilon" => self.epsilon = parse(key, v)?,
            "clip_norm" => self.clip_norm = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "max_sentences" => self.max_sentences = parse(key, v)?,
            "max_words" => self.max_words = parse(key, v)?,
            "permute_entities" => self.permute_entities = parse_bool(key, v)?,
            "noise_samples" => self.noise_samples = parse(key, v)?,
            "curriculum" => self.curriculum = v.to_string(),
            "min_count" => self.min_count = parse(key, v)?,
            "num_entities" => self.num_entities = parse(key, v)?,
            "top_k" => self.top_k = parse(key, v)?,
            "beam_width" => self.beam_width = parse(key, v)?,
            "max_len" => self.max_len = parse(key, v)?,
            "limit" => self.limit = parse(key, v)?,
            "neighbors" => self.neighbors = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            other => bail!("unknown configuration key `{other}`"),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').with_context(|| format!("line {}: expected `key = value`", n + 1))?;
            self.set(k, v).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    /// Defaults, then the optional file, then `key=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        for o in overrides {
            let (k, v) = o.split_once('=').with_context(|| format!("override `{o}` is not key=value"))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config(4).validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            bail!("epochs and batch_size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bail!("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            bail!("beta1 and beta2 must be in [0, 1)");
        }
        if self.epsilon.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || self.clip_norm.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
        {
            bail!("epsilon and clip_norm must be positive");
        }
        if self.max_sentences == 0 || self.max_words == 0 {
            bail!("max_sentences and max_words must be positive");
        }
        if self.top_k == 0 || self.beam_width == 0 || self.max_len == 0 {
            bail!("top_k, beam_width and max_len must be positive");
        }
        if self.neighbors == 0 {
            bail!("neighbors must be positive");
        }
        self.schedule()?;
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            word_dim: self.word_dim,
            sent_dim: self.sent_dim,
            doc_dim: self.doc_dim,
            kernel_widths: self.kernel_widths.clone(),
            mlp_dim: self.mlp_dim,
            dropout: self.dropout,
            init_range: self.init_range,
            feed_attention: self.feed_attention,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            clip_norm: self.clip_norm,
            seed: self.seed,
            max_sentences: self.max_sentences,
            max_words: self.max_words,
            permute_entities: self.permute_entities,
            noise_samples: self.noise_samples,
        }
    }

    pub fn schedule(&self) -> Result<CurriculumSchedule> {
        match self.curriculum.split_once(':') {
            None if self.curriculum == "linear" => Ok(CurriculumSchedule::Linear { total_epochs: self.epochs }),
            Some(("constant", p)) => {
                let p: f64 = parse("curriculum", p)?;
                if !(0.0..=1.0).contains(&p) {
                    bail!("curriculum probability must be in [0, 1]");
                }
                Ok(CurriculumSchedule::Constant(p))
            }
            _ => bail!("curriculum must be `linear` or `constant:P`"),
        }
    }

    /// The configuration as `key = value` lines, readable by [`RunConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let widths: Vec<String> = self.kernel_widths.iter().map(ToString::to_string).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("word_dim", self.word_dim.to_string()),
            ("sent_dim", self.sent_dim.to_string()),
            ("doc_dim", self.doc_dim.to_string()),
            ("kernel_widths", widths.join(",")),
            ("mlp_dim", self.mlp_dim.to_string()),
            ("dropout", self.dropout.to_string()),
            ("init_range", self.init_range.to_string()),
            ("feed_attention", self.feed_attention.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("seed", self.seed.to_string()),
            ("max_sentences", self.max_sentences.to_string()),
            ("max_words", self.max_words.to_string()),
            ("permute_entities", self.permute_entities.to_string()),
            ("noise_samples", self.noise_samples.to_string()),
            ("curriculum", self.curriculum.clone()),
            ("min_count", self.min_count.to_string()),
            ("num_entities", self.num_entities.to_string()),
            ("top_k", self.top_k.to_string()),
            ("beam_width", self.beam_width.to_string()),
            ("max_len", self.max_len.to_string()),
            ("limit", self.limit.to_string()),
            ("neighbors", self.neighbors.to_string()),
            ("tau", self.tau.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
