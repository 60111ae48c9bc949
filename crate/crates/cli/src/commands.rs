//! Subcommand definitions and their pipelines.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hiersum_core::baselines::{corpus_features, lead3, train_lreg, LregModel, LregOptions};
use hiersum_core::datagen::{
    build_word_extraction_example, generate_fixture_corpus, label_document, tune_rule_weights, ConstructionReport,
    FixtureParams, LabelRuleWeights, WordExtractionExample,
};
use hiersum_core::eval::{
    evaluate_corpus, render_table, truncate, Aggregate, LimitSpec, Metric, ReferenceSet, SummaryRecord,
};
use hiersum_core::extractors::{
    candidate_features, rerank, select_summary_sentences, tune_rerank_weights, NBestEntry, NBestItem, RerankerWeights,
    SentenceTrainer, WordDecoder, WordTrainer,
};
use hiersum_core::tensor::RngStream;
use hiersum_core::textprep::{
    build_vocab, deanonymize, is_entity_marker, load_embeddings, prepare_document, read_corpus, write_jsonl,
    BatchLimits, Document, EmbeddingTable, Vocabulary,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::RunConfig;
use crate::report::{render_attention, AttentionDoc, ReportFormat};

#[derive(Debug, Parser)]
#[command(name = "hiersum", version, about = "Extractive summarization with hierarchical neural extractors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled corpus.
    GenFixture(GenFixtureArgs),
    /// Label sentences and build word-extraction targets from a corpus with highlights.
    MakeDataset(MakeDatasetArgs),
    /// Train the sentence extractor.
    TrainSe(TrainArgs),
    /// Train the word extractor.
    TrainWe(TrainArgs),
    /// Train the logistic-regression baseline.
    TrainLreg(TrainLregArgs),
    /// Produce one summary per document.
    Summarize(SummarizeArgs),
    /// Score several systems against shared references.
    Evaluate(EvaluateArgs),
    /// Score one system against references.
    Rouge(RougeArgs),
    /// Render per-sentence extraction probabilities as a heat report.
    ReportAttention(ReportArgs),
    /// Fit reranker weights on an n-best dump.
    TuneReranker(TuneRerankerArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one setting; repeatable; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.set)
    }
}

#[derive(Debug, Args)]
pub struct GenFixtureArgs {
    #[arg(long, default_value_t = 32)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MakeDatasetArgs {
    /// Corpus with highlights (JSONL).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Word vectors used for neighbour substitution.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Labeling rule weights (JSON).
    #[arg(long, conflicts_with = "tune_rules")]
    pub rules: Option<PathBuf>,
    /// Fit the labeling rule on documents that carry gold labels.
    #[arg(long)]
    pub tune_rules: bool,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data: labeled corpus (sentence extractor) or word examples.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Checkpoint written after every epoch.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a checkpoint with its stored configuration.
    #[arg(long, conflicts_with_all = ["config", "set", "embeddings"])]
    pub resume: Option<PathBuf>,
    /// Stop once this many epochs are complete.
    #[arg(long)]
    pub stop_after: Option<usize>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TrainLregArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Labeled corpus used to pick the decision threshold.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Se,
    We,
    Lead,
    Lreg,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Checkpoint or baseline artifact; not needed for `lead`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    /// Summaries as `{id, tokens}` JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the model type.
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub limit: Option<LimitSpec>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub beam_width: Option<usize>,
    /// Per-sentence scores as `{id, scores}` JSONL.
    #[arg(long)]
    pub dump_scores: Option<PathBuf>,
    /// Every finished beam hypothesis as JSONL.
    #[arg(long)]
    pub nbest: Option<PathBuf>,
    /// Reranker weights (JSON) applied to the beam.
    #[arg(long)]
    pub reranker: Option<PathBuf>,
    /// Restore entity surface strings in the output.
    #[arg(long)]
    pub deanonymize: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AggregateArg {
    Max,
    Mean,
}

impl From<AggregateArg> for Aggregate {
    fn from(a: AggregateArg) -> Self {
        match a {
            AggregateArg::Max => Aggregate::Max,
            AggregateArg::Mean => Aggregate::Mean,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoringArgs {
    /// References: `{id, references}` JSONL or a corpus with highlights.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Repeatable; defaults to 75 bytes, 275 bytes and full length.
    #[arg(long)]
    pub limit: Vec<LimitSpec>,
    /// Column shown in the table: precision, recall or f1.
    #[arg(long, default_value = "recall")]
    pub metric: Metric,
    #[arg(long, value_enum, default_value = "max")]
    pub aggregate: AggregateArg,
    /// Full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `NAME=FILE`; repeatable.
    #[arg(long = "sys", required = true)]
    pub systems: Vec<String>,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args)]
pub struct RougeArgs {
    #[arg(long = "sys")]
    pub system: PathBuf,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "html")]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct TuneRerankerArgs {
    #[arg(long)]
    pub nbest: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Persisted logistic-regression baseline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LregArtifact {
    pub model: LregModel,
    pub vocab: Vocabulary,
    /// Word vectors file, or `None` for seeded random vectors.
    pub embeddings: Option<PathBuf>,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl LregArtifact {
    fn table(&self) -> Result<EmbeddingTable<f64>> {
        embedding_table(self.embeddings.as_deref(), &self.vocab, self.embedding_dim, self.seed)
    }
}

/// Reranker weights file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RerankerFile {
    pub weights: RerankerWeights,
    /// Mean ROUGE-2 F on the tuning set.
    pub objective: f64,
}

/// One `--dump-scores` line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub scores: Vec<f64>,
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::GenFixture(a) => gen_fixture(&a, out),
        Command::MakeDataset(a) => make_dataset(&a, out),
        Command::TrainSe(a) => train_se(&a, out),
        Command::TrainWe(a) => train_we(&a, out),
        Command::TrainLreg(a) => train_lreg_cmd(&a, out),
        Command::Summarize(a) => summarize(&a, out),
        Command::Evaluate(a) => {
            let systems = a
                .systems
                .iter()
                .map(|s| {
                    let (name, file) = s.split_once('=').with_context(|| format!("`--sys {s}` is not NAME=FILE"))?;
                    Ok((name.to_string(), PathBuf::from(file)))
                })
                .collect::<Result<Vec<_>>>()?;
            score_systems(&systems, &a.scoring, out)
        }
        Command::Rouge(a) => {
            let name = a.system.file_stem().map_or_else(|| "system".into(), |s| s.to_string_lossy().into_owned());
            score_systems(&[(name, a.system.clone())], &a.scoring, out)
        }
        Command::ReportAttention(a) => report_attention(&a, out),
        Command::TuneReranker(a) => tune_reranker(&a, out),
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    read_corpus(path).with_context(|| format!("reading corpus {}", path.display()))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_records<S: Serialize>(path: &Path, items: &[S]) -> Result<()> {
    write_jsonl(path, items).with_context(|| format!("writing {}", path.display()))
}

/// Entity markers needed to cover every marker in the corpus.
fn entity_count(cfg: &RunConfig, docs: &[Document]) -> usize {
    if cfg.num_entities > 0 {
        return cfg.num_entities;
    }
    docs.iter()
        .flat_map(|d| d.sentences.iter().chain(d.highlights()).flatten())
        .filter(|t| is_entity_marker(t))
        .filter_map(|t| t["entity".len()..].parse::<usize>().ok())
        .map(|k| k + 1)
        .max()
        .unwrap_or(0)
}

fn corpus_vocab(cfg: &RunConfig, docs: &[Document]) -> Vocabulary {
    build_vocab(docs, cfg.min_count, entity_count(cfg, docs))
}

fn embedding_table(path: Option<&Path>, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable<f64>> {
    let mut rng = RngStream::new(seed);
    match path {
        Some(p) => {
            load_embeddings(p, vocab, dim, &mut rng).with_context(|| format!("reading embeddings {}", p.display()))
        }
        None => Ok(EmbeddingTable::random(vocab.len(), dim, &mut rng)),
    }
}

fn to_f32(t: &EmbeddingTable<f64>) -> EmbeddingTable<f32> {
    let data = t.matrix.data().iter().map(|&x| x as f32).collect();
    EmbeddingTable {
        matrix: hiersum_core::tensor::Tensor::new(t.matrix.shape().to_vec(), data).expect("same shape"),
        provenance: t.provenance.clone(),
    }
}

fn gen_fixture(a: &GenFixtureArgs, out: &mut dyn Write) -> Result<()> {
    let docs = generate_fixture_corpus(&mut RngStream::new(a.seed), a.n, &FixtureParams::default());
    write_records(&a.out, &docs)?;
    writeln!(out, "wrote {} documents to {}", docs.len(), a.out.display())?;
    Ok(())
}

#[derive(Serialize)]
struct DatasetReport<'a> {
    construction: &'a ConstructionReport,
    rules: &'a LabelRuleWeights,
    tuned_accuracy: Option<f64>,
    embedding_coverage: f64,
}

fn make_dataset(a: &MakeDatasetArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.cfg.load()?;
    let raw = load_corpus(&a.input)?;
    let docs: Vec<Document> = raw.iter().map(prepare_document).collect();
    if let Some(d) = docs.iter().find(|d| d.highlights.is_none()) {
        bail!("document `{}` has no highlights", d.id);
    }
    let (rules, tuned_accuracy) = if a.tune_rules {
        let labeled: Vec<Document> = docs.iter().filter(|d| d.labels.is_some()).cloned().collect();
        let tuned = tune_rule_weights(&labeled)?;
        (tuned.weights, Some(tuned.accuracy))
    } else if let Some(p) = &a.rules {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        (serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?, None)
    } else {
        (LabelRuleWeights::default(), None)
    };

    let vocab = corpus_vocab(&cfg, &docs);
    let emb = embedding_table(a.embeddings.as_deref(), &vocab, cfg.word_dim, cfg.seed)?;
    let mut report = ConstructionReport::default();
    let mut labeled = Vec::with_capacity(docs.len());
    let mut examples = Vec::new();
    for d in &docs {
        let labels = label_document(d, d.highlights(), &rules);
        report.record_labels(&labels);
        let mut d = d.clone();
        d.labels = Some(labels);
        let outcome = build_word_extraction_example(&d, &vocab, &emb, cfg.neighbors, cfg.tau);
        report.record_outcome(&outcome);
        if let Some(ex) = outcome.accepted() {
            examples.push(ex.clone());
        }
        labeled.push(d);
    }

    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    write_records(&a.out_dir.join("sentences.jsonl"), &labeled)?;
    write_records(&a.out_dir.join("words.jsonl"), &examples)?;
    let summary =
        DatasetReport { construction: &report, rules: &rules, tuned_accuracy, embedding_coverage: emb.coverage() };
    write_json(&a.out_dir.join("report.json"), &summary)?;
    writeln!(
        out,
        "{} documents, {}/{} sentences positive, {} word examples accepted ({} rejected)",
        report.documents, report.positive_sentences, report.sentences, report.accepted, report.rejected
    )?;
    Ok(())
}

fn epoch_line(out: &mut dyn Write, epoch: usize, loss: f64, acc: f64, valid: Option<f64>) -> Result<()> {
    match valid {
        Some(v) => writeln!(out, "epoch {epoch} loss {loss} accuracy {acc} valid {v}")?,
        None => writeln!(out, "epoch {epoch} loss {loss} accuracy {acc}")?,
    }
    Ok(())
}

fn stop_epoch(cfg: &RunConfig, stop_after: Option<usize>) -> usize {
    stop_after.map_or(cfg.epochs, |s| s.min(cfg.epochs))
}

fn train_se(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let docs = load_corpus(&a.train)?;
    let valid = a.valid.as_deref().map(load_corpus).transpose()?;
    let (mut trainer, cfg, vocab) = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            (ck.sentence_trainer()?, ck.header.run.clone(), ck.vocab().clone())
        }
        None => {
            let cfg = a.cfg.load()?;
            let vocab = corpus_vocab(&cfg, &docs);
            let mut t: SentenceTrainer<f32> =
                SentenceTrainer::new(&cfg.model_config(vocab.len()), cfg.train_config(), cfg.schedule()?)?;
            if let Some(p) = &a.embeddings {
                let table = embedding_table(Some(p), &vocab, cfg.word_dim, cfg.seed)?;
                t.model.encoder.load_embeddings(&mut t.store, &to_f32(&table))?;
            }
            (t, cfg, vocab)
        }
    };
    let stop = stop_epoch(&cfg, a.stop_after);
    while trainer.epoch < stop {
        let stats = trainer.train_epoch(&docs, &vocab)?;
        let v = valid.as_deref().map(|d| trainer.accuracy(d, &vocab)).transpose()?;
        epoch_line(out, stats.epoch, stats.loss, stats.accuracy, v)?;
        Checkpoint::from_sentence_trainer(&trainer, &cfg, &vocab).save(&a.out)?;
    }
    if trainer.epoch >= stop && !a.out.exists() {
        Checkpoint::from_sentence_trainer(&trainer, &cfg, &vocab).save(&a.out)?;
    }
    Ok(())
}

fn exact_match_rate(
    t: &WordTrainer<f32>,
    examples: &[WordExtractionExample],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for ex in examples {
        if t.greedy_tokens(ex, vocab, max_len)? == ex.target {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

fn train_we(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let examples: Vec<WordExtractionExample> = read_jsonl(&a.train)?;
    let valid: Option<Vec<WordExtractionExample>> = a.valid.as_deref().map(read_jsonl).transpose()?;
    let (mut trainer, cfg, vocab) = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            (ck.word_trainer()?, ck.header.run.clone(), ck.vocab().clone())
        }
        None => {
            let cfg = a.cfg.load()?;
            let docs: Vec<Document> = examples.iter().map(|e| e.document.clone()).collect();
            let vocab = corpus_vocab(&cfg, &docs);
            let mut t: WordTrainer<f32> = WordTrainer::new(&cfg.model_config(vocab.len()), cfg.train_config())?;
            if let Some(p) = &a.embeddings {
                let table = embedding_table(Some(p), &vocab, cfg.word_dim, cfg.seed)?;
                t.model.encoder.load_embeddings(&mut t.store, &to_f32(&table))?;
            }
            (t, cfg, vocab)
        }
    };
    let stop = stop_epoch(&cfg, a.stop_after);
    while trainer.epoch < stop {
        let stats = trainer.train_epoch(&examples, &vocab)?;
        let v = valid.as_deref().map(|ex| exact_match_rate(&trainer, ex, &vocab, cfg.max_len)).transpose()?;
        epoch_line(out, stats.epoch, stats.loss, stats.accuracy, v)?;
        Checkpoint::from_word_trainer(&trainer, &cfg, &vocab).save(&a.out)?;
    }
    if trainer.epoch >= stop && !a.out.exists() {
        Checkpoint::from_word_trainer(&trainer, &cfg, &vocab).save(&a.out)?;
    }
    Ok(())
}

fn train_lreg_cmd(a: &TrainLregArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.cfg.load()?;
    let docs = load_corpus(&a.train)?;
    let vocab = corpus_vocab(&cfg, &docs);
    let artifact = LregArtifact {
        model: LregModel::zero(),
        vocab,
        embeddings: a.embeddings.clone(),
        embedding_dim: cfg.word_dim,
        seed: cfg.seed,
    };
    let emb = artifact.table()?;
    let (xs, ys) = corpus_features(&docs, &artifact.vocab, &emb)?;
    let mut model = train_lreg(&xs, &ys, &LregOptions::default())?;
    if let Some(v) = &a.valid {
        let vdocs = load_corpus(v)?;
        let (vx, vy) = corpus_features(&vdocs, &artifact.vocab, &emb)?;
        let acc = model.tune_threshold(&vx, &vy)?;
        writeln!(out, "threshold {} validation accuracy {acc}", model.threshold)?;
    }
    let train_acc = xs.iter().zip(&ys).filter(|(x, &y)| model.predict(x) == y).count() as f64 / xs.len() as f64;
    writeln!(out, "training accuracy {train_acc}")?;
    write_json(&a.out, &LregArtifact { model, ..artifact })
}

/// A loaded summarization model.
pub enum Model {
    Sentence { trainer: SentenceTrainer<f32>, vocab: Vocabulary, cfg: RunConfig },
    Word { trainer: WordTrainer<f32>, vocab: Vocabulary, cfg: RunConfig },
    Lreg { artifact: LregArtifact, emb: EmbeddingTable<f64> },
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
    if bytes.starts_with(crate::checkpoint::MAGIC) {
        let ck = Checkpoint::from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))?;
        let vocab = ck.vocab().clone();
        let cfg = ck.header.run.clone();
        return Ok(match ck.header.kind {
            ModelKind::SentenceExtractor => Model::Sentence { trainer: ck.sentence_trainer()?, vocab, cfg },
            ModelKind::WordExtractor => Model::Word { trainer: ck.word_trainer()?, vocab, cfg },
        });
    }
    let mut artifact: LregArtifact = serde_json::from_slice(&bytes)
        .map_err(|e| hiersum_core::Error::CheckpointMismatch(format!("{}: not a model file ({e})", path.display())))?;
    artifact.vocab.reindex();
    let emb = artifact.table()?;
    Ok(Model::Lreg { artifact, emb })
}

fn limits(cfg: &RunConfig) -> BatchLimits {
    BatchLimits { max_sentences: cfg.max_sentences, max_words: cfg.max_words }
}

/// Per-sentence extraction probabilities; the single source for score
/// dumps and attention reports.
pub fn sentence_scores(model: &Model, doc: &Document) -> Result<Vec<f64>> {
    match model {
        Model::Sentence { trainer, vocab, cfg } => {
            Ok(trainer.model.score_document(&trainer.store, doc, vocab, limits(cfg))?)
        }
        Model::Lreg { artifact, emb } => Ok(artifact.model.score_document(doc, &artifact.vocab, emb)),
        Model::Word { .. } => {
            Err(hiersum_core::Error::CheckpointMismatch("word extractor checkpoints have no sentence scores".into())
                .into())
        }
    }
}

/// Selected sentences concatenated. A non-empty document whose every
/// candidate exceeds the limit yields its best sentence, truncated.
fn extract_sentences(scores: &[f64], doc: &Document, k: usize, limit: LimitSpec) -> Vec<String> {
    let picked = select_summary_sentences(scores, &doc.sentences, k, limit);
    if picked.is_empty() {
        let best =
            (0..doc.sentences.len()).filter(|&i| !doc.sentences[i].is_empty()).fold(None::<usize>, |b, i| match b {
                Some(j) if scores[j] >= scores[i] => Some(j),
                _ => Some(i),
            });
        return best.map(|i| truncate(&doc.sentences[i], limit)).unwrap_or_default();
    }
    picked.iter().flat_map(|&i| doc.sentences[i].iter().cloned()).collect()
}

fn restore_entities(tokens: Vec<String>, doc: &Document) -> Vec<String> {
    let mut d = Document::new(doc.id.clone(), vec![tokens]);
    d.entity_map = doc.entity_map.clone();
    deanonymize(&d).sentences.pop().unwrap_or_default()
}

fn read_reranker(path: &Path) -> Result<RerankerWeights> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: RerankerFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(file.weights)
}

fn summarize(a: &SummarizeArgs, out: &mut dyn Write) -> Result<()> {
    let docs = load_corpus(&a.input)?;
    let model = a.model.as_deref().map(load_model).transpose()?;
    let method = match (a.method, &model) {
        (Some(m), _) => m,
        (None, Some(Model::Sentence { .. })) => Method::Se,
        (None, Some(Model::Word { .. })) => Method::We,
        (None, Some(Model::Lreg { .. })) => Method::Lreg,
        (None, None) => bail!("--model is required unless --method lead is given"),
    };
    let cfg = match &model {
        Some(Model::Sentence { cfg, .. } | Model::Word { cfg, .. }) => cfg.clone(),
        _ => RunConfig::default(),
    };
    let limit = a.limit.unwrap_or(cfg.limit);
    let top_k = a.top_k.unwrap_or(cfg.top_k);
    let width = a.beam_width.unwrap_or(cfg.beam_width);
    let mismatch = |want: &str| -> anyhow::Error {
        hiersum_core::Error::CheckpointMismatch(format!("method `{want}` needs a matching model")).into()
    };
    if a.dump_scores.is_some() && !matches!(method, Method::Se | Method::Lreg) {
        bail!("--dump-scores applies to the se and lreg methods");
    }
    if (a.nbest.is_some() || a.reranker.is_some()) && method != Method::We {
        bail!("--nbest and --reranker apply to the we method");
    }
    let reranker = a.reranker.as_deref().map(read_reranker).transpose()?;

    let mut summaries = Vec::with_capacity(docs.len());
    let mut dumps = Vec::new();
    let mut nbest = Vec::new();
    for doc in &docs {
        let tokens = match method {
            Method::Lead => lead3(doc, limit),
            Method::Se | Method::Lreg => {
                let m = model.as_ref().filter(|m| match method {
                    Method::Se => matches!(m, Model::Sentence { .. }),
                    _ => matches!(m, Model::Lreg { .. }),
                });
                let m = m.ok_or_else(|| mismatch(if method == Method::Se { "se" } else { "lreg" }))?;
                let scores = sentence_scores(m, doc)?;
                let tokens = extract_sentences(&scores, doc, top_k, limit);
                dumps.push(ScoreRecord { id: doc.id.clone(), scores });
                tokens
            }
            Method::We => {
                let Some(Model::Word { trainer, vocab, cfg }) = &model else { return Err(mismatch("we")) };
                if doc.sentences.iter().all(Vec::is_empty) {
                    Vec::new()
                } else {
                    let dec = WordDecoder::for_document(&trainer.model, &trainer.store, doc, vocab, limits(cfg))?;
                    let hyps = dec.beam(width, cfg.max_len)?;
                    let mut cands = Vec::with_capacity(hyps.len());
                    for (rank, h) in hyps.iter().enumerate() {
                        let toks: Vec<String> =
                            dec.token_ids(&h.tokens).into_iter().map(|id| vocab.decode(id).to_string()).collect();
                        let entry = NBestEntry {
                            doc_id: doc.id.clone(),
                            rank,
                            features: candidate_features(&toks, &doc.sentences),
                            tokens: toks,
                            logprob: h.logprob,
                            score: h.normalized(),
                        };
                        cands.push(entry.candidate());
                        nbest.push(entry);
                    }
                    let pick = match &reranker {
                        Some(w) => rerank(&cands, w),
                        None => (!cands.is_empty()).then_some(0),
                    };
                    pick.map(|i| truncate(&cands[i].tokens, limit)).unwrap_or_default()
                }
            }
        };
        let tokens = if a.deanonymize { restore_entities(tokens, doc) } else { tokens };
        summaries.push(SummaryRecord { id: doc.id.clone(), tokens });
    }
    write_records(&a.out, &summaries)?;
    if let Some(p) = &a.dump_scores {
        write_records(p, &dumps)?;
    }
    if let Some(p) = &a.nbest {
        write_records(p, &nbest)?;
    }
    writeln!(out, "wrote {} summaries to {}", summaries.len(), a.out.display())?;
    Ok(())
}

/// References from `{id, references}` lines, or one reference per document
/// made of its concatenated highlights.
pub fn load_references(path: &Path) -> Result<Vec<ReferenceSet>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text.lines().find(|l| !l.trim().is_empty());
    let is_reference_set = match first {
        Some(l) => serde_json::from_str::<serde_json::Value>(l)
            .with_context(|| format!("{}:1", path.display()))?
            .get("references")
            .is_some(),
        None => true,
    };
    if is_reference_set {
        return read_jsonl(path);
    }
    load_corpus(path)?
        .into_iter()
        .map(|d| match d.highlights {
            Some(h) => Ok(ReferenceSet { id: d.id, references: vec![h.concat()] }),
            None => bail!("document `{}` has no highlights", d.id),
        })
        .collect()
}

fn score_systems(systems: &[(String, PathBuf)], s: &ScoringArgs, out: &mut dyn Write) -> Result<()> {
    let refs = load_references(&s.reference)?;
    let limits = if s.limit.is_empty() {
        vec![LimitSpec::Bytes(75), LimitSpec::Bytes(275), LimitSpec::None]
    } else {
        s.limit.clone()
    };
    let mut reports = Vec::with_capacity(systems.len());
    for (name, file) in systems {
        let sys: Vec<SummaryRecord> = read_jsonl(file)?;
        reports.push(evaluate_corpus(name, &sys, &refs, &limits, s.aggregate.into())?);
    }
    write!(out, "{}", render_table(&reports, s.metric))?;
    if let Some(p) = &s.json {
        write_json(p, &reports)?;
    }
    Ok(())
}

fn report_attention(a: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    if !matches!(model, Model::Sentence { .. }) {
        return Err(hiersum_core::Error::CheckpointMismatch("expected a sentence extractor checkpoint".into()).into());
    }
    let docs = load_corpus(&a.input)?;
    let mut items = Vec::with_capacity(docs.len());
    for d in &docs {
        items.push(AttentionDoc {
            id: d.id.clone(),
            sentences: d.sentences.clone(),
            scores: sentence_scores(&model, d)?,
        });
    }
    std::fs::write(&a.out, render_attention(&items, a.format))
        .with_context(|| format!("writing {}", a.out.display()))?;
    writeln!(out, "wrote report for {} documents to {}", items.len(), a.out.display())?;
    Ok(())
}

fn tune_reranker(a: &TuneRerankerArgs, out: &mut dyn Write) -> Result<()> {
    let entries: Vec<NBestEntry> = read_jsonl(&a.nbest)?;
    let refs: BTreeMap<String, Vec<Vec<String>>> =
        load_references(&a.reference)?.into_iter().map(|r| (r.id, r.references)).collect();
    let mut items: Vec<NBestItem> = Vec::new();
    for e in entries {
        match items.last_mut() {
            Some(it) if it.doc_id == e.doc_id => it.candidates.push(e.candidate()),
            _ => {
                let references = refs
                    .get(&e.doc_id)
                    .cloned()
                    .ok_or_else(|| hiersum_core::Error::Alignment(vec![e.doc_id.clone()]))?;
                items.push(NBestItem { doc_id: e.doc_id.clone(), candidates: vec![e.candidate()], references });
            }
        }
    }
    let (weights, objective) = tune_rerank_weights(&items)?;
    write_json(&a.out, &RerankerFile { weights, objective })?;
    writeln!(out, "rouge-2 f {objective} weights {:?}", weights.lambdas)?;
    Ok(())
}
