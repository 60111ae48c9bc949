//! End-to-end acceptance criteria A1-A9. Each criterion prints one
//! PASS/FAIL/SKIP line to stderr (uncaptured) and the test fails if any
//! criterion fails.

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use hiersum_cli::checkpoint::Checkpoint;
use hiersum_cli::commands::load_references;
use hiersum_cli::config::RunConfig;
use hiersum_core::baselines::{corpus_features, lead3, train_lreg, LregOptions};
use hiersum_core::datagen::{generate_fixture_corpus, tune_rule_weights, FixtureParams, WordExtractionExample};
use hiersum_core::encoder::ModelConfig;
use hiersum_core::eval::{
    evaluate_corpus, rouge_l_single, rouge_n, rouge_n_single, Aggregate, LimitSpec, ReferenceSet, RougeScore,
    SummaryRecord,
};
use hiersum_core::extractors::{
    beam_decode, build_support, greedy_decode, select_summary_sentences, CurriculumSchedule, Gating, NoiseSampler,
    SentenceExtractor, SentenceTrainer, StepModel, TrainConfig, WordDecoder, WordExtractor, WordTrainer,
};
use hiersum_core::tensor::{
    dropout, grad_check, grad_check_inputs, lstm_step, GradCheckOptions, Graph, Mode, ParamStore, RngStream, Tensor,
    Var,
};
use hiersum_core::textprep::{build_vocab, prepare_document, read_corpus, Document, EmbeddingTable, Vocabulary};
use rand::Rng;

/// Finite-difference relative error bound.
const A1_MAX_REL_ERROR: f64 = 1e-4;
const A1_POINTS: usize = 10;
const A2_MIN_ACCURACY: f64 = 0.99;
const A2_MAX_EPOCHS: usize = 200;
const A2_MIN_DARKEST_POSITIVE: usize = 30;
const A3_MIN_EXACT: f64 = 0.90;
const A3_EPOCHS: usize = 800;
const A4_RANDOM_PAIRS: usize = 100;
const A4_MAX_LEN: usize = 10;
const A6_INSTANCES: usize = 20;
const A7_MIN_ACCURACY: f64 = 0.85;
const A8_EPOCHS: usize = 5;
const A9_TARGET_ROUGE1: f64 = 43.6;
const A9_TOLERANCE: f64 = 2.0;
const A9_ENV: &str = "HIERSUM_DUC_CORPUS";
/// Optional `{id, references}` file with one entry per manual summary.
const A9_REFS_ENV: &str = "HIERSUM_DUC_REFS";

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

impl Outcome {
    fn check(ok: bool, detail: String) -> Self {
        Self { verdict: if ok { Verdict::Pass } else { Verdict::Fail }, detail }
    }
}

fn report(id: &str, title: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f));
    let elapsed = start.elapsed();
    let (mut verdict, mut detail) = match result {
        Ok(o) => (o.verdict, o.detail),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (Verdict::Fail, format!("panicked: {msg}"))
        }
    };
    if matches!(verdict, Verdict::Pass) && elapsed > budget {
        verdict = Verdict::Fail;
        detail = format!("{detail}; over the {budget:?} budget");
    }
    let tag = match verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Skip => "SKIP",
    };
    let line = format!("{id} {tag} {title}: {detail} [{:.1}s]\n", elapsed.as_secs_f64());
    let _ = std::io::stderr().write_all(line.as_bytes());
    !matches!(verdict, Verdict::Fail)
}

#[test]
fn acceptance() {
    let _ = std::io::stderr().write_all(b"\n");
    let results = [
        report("A1", "gradient suite", Duration::from_secs(120), a1_gradients),
        report("A2", "sentence extractor overfit", Duration::from_secs(600), a2_sentence_overfit),
        report("A3", "word extractor overfit", Duration::from_secs(900), a3_word_overfit),
        report("A4", "ROUGE oracles", Duration::from_secs(10), a4_rouge),
        report("A5", "system ordering", Duration::from_secs(900), a5_ordering),
        report("A6", "beam optimality", Duration::from_secs(60), a6_beam),
        report("A7", "labeling rules", Duration::from_secs(60), a7_labeling),
        report("A8", "determinism and resume", Duration::from_secs(300), a8_determinism),
        report("A9", "LEAD-3 on DUC 2002", Duration::from_secs(600), a9_duc),
    ];
    assert!(results.iter().all(|&ok| ok), "acceptance criteria failed; see the lines above");
}

// ---------------------------------------------------------------- A1

fn rand_tensor(rng: &mut RngStream, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

struct Worst {
    err: f64,
    what: String,
    checks: usize,
}

impl Worst {
    fn add(&mut self, what: &str, r: hiersum_core::Result<hiersum_core::tensor::GradCheckReport>) {
        match r {
            Ok(r) => {
                self.checks += 1;
                if r.max_rel_error > self.err || r.checked == 0 {
                    self.err = if r.checked == 0 { f64::INFINITY } else { r.max_rel_error };
                    self.what = what.to_string();
                }
            }
            Err(e) => {
                self.err = f64::INFINITY;
                self.what = format!("{what}: {e}");
            }
        }
    }
}

/// Weighted sum with fixed random weights, so every output coordinate matters.
fn weighted_sum(g: &mut Graph<'_, f64>, v: Var, weights: &[f64]) -> hiersum_core::Result<Var> {
    let shape = g.shape(v).to_vec();
    let n: usize = shape.iter().product();
    let c = g.constant(Tensor::new(shape, weights[..n].to_vec())?);
    let m = g.mul(v, c)?;
    Ok(g.sum(m))
}

fn tiny_model(vocab: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        word_dim: 4,
        sent_dim: 3,
        doc_dim: 5,
        kernel_widths: vec![1, 2],
        mlp_dim: 4,
        dropout: 0.0,
        init_range: 0.5,
        feed_attention: false,
    }
}

fn a1_gradients() -> Outcome {
    let opts = GradCheckOptions::default();
    let mut w = Worst { err: 0.0, what: String::new(), checks: 0 };
    let mut rng = RngStream::new(101);
    for _ in 0..A1_POINTS {
        let ws: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = rand_tensor(&mut rng, &[3, 4], 1.0);
        let b = rand_tensor(&mut rng, &[4, 2], 1.0);
        let bt = rand_tensor(&mut rng, &[5, 4], 1.0);
        let row = rand_tensor(&mut rng, &[4], 1.0);
        let a2 = rand_tensor(&mut rng, &[3, 4], 1.0);
        w.add(
            "matmul",
            grad_check_inputs(&[a.clone(), b], &opts, |g, v| {
                let y = g.matmul(v[0], v[1])?;
                weighted_sum(g, y, &ws)
            }),
        );
        w.add(
            "matmul_bt",
            grad_check_inputs(&[a.clone(), bt], &opts, |g, v| {
                let y = g.matmul_bt(v[0], v[1])?;
                weighted_sum(g, y, &ws)
            }),
        );
        w.add(
            "add/mul/scale",
            grad_check_inputs(&[a.clone(), a2.clone()], &opts, |g, v| {
                let y = g.add(v[0], v[1])?;
                let y = g.mul(y, v[1])?;
                let y = g.scale(y, 0.7);
                weighted_sum(g, y, &ws)
            }),
        );
        w.add(
            "add_row/tanh/sigmoid",
            grad_check_inputs(&[a.clone(), row], &opts, |g, v| {
                let y = g.add_row(v[0], v[1])?;
                let t = g.tanh(y);
                let s = g.sigmoid(y);
                let y = g.add(t, s)?;
                weighted_sum(g, y, &ws)
            }),
        );
        w.add(
            "slice/concat/stack",
            grad_check_inputs(&[a.clone(), a2.clone()], &opts, |g, v| {
                let s = g.slice_cols(v[0], 1, 2)?;
                let c = g.concat_cols(&[s, v[1]])?;
                let r = g.slice_rows(c, 0, 2)?;
                let y = g.stack_rows(&[r, c])?;
                weighted_sum(g, y, &ws)
            }),
        );
        w.add(
            "blend_rows",
            grad_check_inputs(&[a.clone(), a2.clone()], &opts, |g, v| {
                let y = g.blend_rows(v[0], v[1], &[false, true, true])?;
                weighted_sum(g, y, &ws)
            }),
        );
        let table = rand_tensor(&mut rng, &[6, 3], 1.0);
        w.add(
            "embedding",
            grad_check_inputs(&[table], &opts, |g, v| {
                let y = g.embedding(v[0], &[3, 0, 3, 5], Some(0))?;
                weighted_sum(g, y, &ws)
            }),
        );
        let x = rand_tensor(&mut rng, &[5, 3], 1.0);
        let k = rand_tensor(&mut rng, &[4, 6], 0.7);
        let kb = rand_tensor(&mut rng, &[4], 0.5);
        w.add(
            "conv_narrow/max_over_time",
            grad_check_inputs(&[x, k, kb], &opts, |g, v| {
                let f = g.conv_narrow(v[0], v[1], v[2], 2)?;
                let t = g.tanh(f);
                let m = g.max_over_time(t)?;
                weighted_sum(g, m, &ws)
            }),
        );
        let scores = rand_tensor(&mut rng, &[1, 6], 2.0);
        w.add(
            "masked_softmax",
            grad_check_inputs(std::slice::from_ref(&scores), &opts, |g, v| {
                let p = g.masked_softmax(v[0], &[true, false, true, true, true, false])?;
                weighted_sum(g, p, &ws)
            }),
        );
        let target = rng.gen_range(0.0..1.0);
        let z = rand_tensor(&mut rng, &[1], 3.0);
        w.add("bce_with_logits", grad_check_inputs(&[z], &opts, |g, v| g.bce_with_logits(v[0], target)));
        w.add(
            "neg_sampling",
            grad_check_inputs(std::slice::from_ref(&scores), &opts, |g, v| g.neg_sampling(v[0], 2, &[0, 4, 4, 5])),
        );
        w.add(
            "softmax_xent",
            grad_check_inputs(&[scores], &opts, |g, v| g.softmax_xent(v[0], &[true, true, false, true, true, true], 3)),
        );
        let hid = 3;
        let pts = vec![
            rand_tensor(&mut rng, &[1, 2], 1.0),
            rand_tensor(&mut rng, &[1, hid], 0.5),
            rand_tensor(&mut rng, &[1, hid], 0.5),
            rand_tensor(&mut rng, &[4 * hid, 2 + hid], 0.5),
            rand_tensor(&mut rng, &[4 * hid], 0.5),
        ];
        w.add(
            "lstm_step",
            grad_check_inputs(&pts, &opts, |g, v| {
                let (h, c) = lstm_step(g, v[0], v[1], v[2], v[3], v[4])?;
                let y = g.concat_cols(&[h, c])?;
                weighted_sum(g, y, &ws)
            }),
        );
        let d = rand_tensor(&mut rng, &[2, 4], 1.0);
        let mask_seed: u64 = rng.gen();
        w.add(
            "dropout",
            grad_check_inputs(&[d], &opts, |g, v| {
                let y = dropout(g, v[0], 0.5, Mode::Train, &mut RngStream::new(mask_seed))?;
                weighted_sum(g, y, &ws)
            }),
        );
    }

    let doc = Document::from_strs("d", &["red fox jumps high", "lazy dog sleeps", "fox sees dog"])
        .with_highlights(&["fox sleeps"]);
    let vocab = build_vocab(std::slice::from_ref(&doc), 1, 0);
    let ids: Vec<Vec<usize>> = doc.sentences.iter().map(|s| vocab.encode_all(s)).collect();
    let labels = [1u8, 0, 1];
    let support = build_support(&ids, &vocab);
    let sampler = NoiseSampler::new(&support, &vocab).unwrap();
    let target = vocab.encode_all(&doc.highlights()[0]);
    for point in 0..A1_POINTS as u64 {
        let mut store = ParamStore::<f64>::new();
        let se = SentenceExtractor::new(&mut store, &tiny_model(vocab.len()), &mut RngStream::new(200 + point));
        w.add(
            "sentence extractor graph",
            grad_check(&store, &opts, |g, s| {
                let steps = se.forward(g, s, &ids, Gating::Gold(&labels), Mode::Eval, &mut RngStream::new(0))?;
                se.loss(g, &steps, &labels)
            }),
        );
        let mut store = ParamStore::<f64>::new();
        let mut cfg = tiny_model(vocab.len());
        cfg.feed_attention = point % 2 == 1;
        let we = WordExtractor::new(&mut store, &cfg, &mut RngStream::new(300 + point));
        let k = if point < 5 { 3 } else { 100 };
        w.add(
            "word extractor graph",
            grad_check(&store, &opts, |g, s| {
                let mut rng = RngStream::new(point);
                Ok(we.loss(g, s, &ids, &support, &target, Some(&sampler), k, Mode::Eval, &mut rng)?.0)
            }),
        );
    }
    Outcome::check(
        w.err < A1_MAX_REL_ERROR,
        format!(
            "worst relative error {:.2e} ({}) over {} checks, bound {A1_MAX_REL_ERROR:.0e}",
            w.err, w.what, w.checks
        ),
    )
}

// ---------------------------------------------------------------- A2

fn small_model(vocab: usize, dim: usize, dropout: f64) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        word_dim: dim,
        sent_dim: dim,
        doc_dim: dim,
        kernel_widths: vec![1, 2, 3],
        mlp_dim: dim,
        dropout,
        init_range: 0.1,
        feed_attention: false,
    }
}

fn fixture(seed: u64, n: usize) -> Vec<Document> {
    generate_fixture_corpus(&mut RngStream::new(seed), n, &FixtureParams::default())
}

fn a2_sentence_overfit() -> Outcome {
    let docs = fixture(7, 32);
    let vocab = build_vocab(&docs, 1, FixtureParams::default().entities_per_doc);
    let cfg = TrainConfig { epochs: A2_MAX_EPOCHS, lr: 0.001, ..TrainConfig::default() };
    let schedule = CurriculumSchedule::Linear { total_epochs: A2_MAX_EPOCHS };
    let mut t: SentenceTrainer<f32> = SentenceTrainer::new(&small_model(vocab.len(), 32, 0.5), cfg, schedule).unwrap();
    let mut acc = 0.0;
    let mut reached = None;
    for e in 1..=A2_MAX_EPOCHS {
        t.train_epoch(&docs, &vocab).unwrap();
        if e % 10 == 0 || e == A2_MAX_EPOCHS {
            acc = t.accuracy(&docs, &vocab).unwrap();
            if acc >= A2_MIN_ACCURACY {
                reached = Some(e);
                break;
            }
        }
    }
    let darkest_positive = docs
        .iter()
        .filter(|d| {
            let p = t.model.score_document(&t.store, d, &vocab, t.config.limits()).unwrap();
            let best = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            p.iter().zip(d.labels.as_ref().unwrap()).all(|(&x, &y)| x < best || y == 1)
        })
        .count();
    let detail = format!(
        "label accuracy {acc:.4} (>= {A2_MIN_ACCURACY}) at epoch {} of {A2_MAX_EPOCHS}; darkest sentence gold-positive in {darkest_positive}/32 docs (>= {A2_MIN_DARKEST_POSITIVE})",
        reached.map_or("-".into(), |e| e.to_string()),
    );
    Outcome::check(reached.is_some() && darkest_positive >= A2_MIN_DARKEST_POSITIVE, detail)
}

// ---------------------------------------------------------------- A3

fn a3_word_overfit() -> Outcome {
    let docs = fixture(7, 16);
    let vocab = build_vocab(&docs, 1, FixtureParams::default().entities_per_doc);
    let examples: Vec<WordExtractionExample> = docs
        .iter()
        .map(|d| WordExtractionExample { document: d.clone(), target: d.highlights().concat(), substitutions: vec![] })
        .collect();
    // A noise count above every support size selects the full softmax.
    let cfg = TrainConfig {
        epochs: A3_EPOCHS,
        lr: 0.005,
        batch_size: 1,
        noise_samples: 1000,
        permute_entities: false,
        ..TrainConfig::default()
    };
    let mut t: WordTrainer<f32> = WordTrainer::new(&small_model(vocab.len(), 32, 0.0), cfg).unwrap();
    for _ in 0..A3_EPOCHS {
        t.train_epoch(&examples, &vocab).unwrap();
    }
    let exact = examples.iter().filter(|ex| t.greedy_tokens(ex, &vocab, 40).unwrap() == ex.target).count();
    let rate = exact as f64 / examples.len() as f64;
    Outcome::check(
        rate >= A3_MIN_EXACT,
        format!(
            "exact greedy reconstruction {exact}/{} = {rate:.3} (>= {A3_MIN_EXACT}) after {A3_EPOCHS} epochs",
            examples.len()
        ),
    )
}

// ---------------------------------------------------------------- A4

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Clipped n-gram matches by nested loops over positions.
fn brute_rouge_n(c: &[String], r: &[String], n: usize) -> (usize, usize, usize) {
    let grams = |x: &[String]| -> Vec<Vec<String>> {
        if x.len() < n {
            Vec::new()
        } else {
            (0..=x.len() - n).map(|i| x[i..i + n].to_vec()).collect()
        }
    };
    let (cg, rg) = (grams(c), grams(r));
    let mut used = vec![false; rg.len()];
    let mut hits = 0;
    for g in &cg {
        if let Some(j) = (0..rg.len()).find(|&j| !used[j] && &rg[j] == g) {
            used[j] = true;
            hits += 1;
        }
    }
    (hits, cg.len(), rg.len())
}

/// Longest common subsequence by enumerating every subsequence of `c`.
fn brute_lcs(c: &[String], r: &[String]) -> usize {
    let is_subseq = |sub: &[&String]| {
        let mut it = r.iter();
        sub.iter().all(|t| it.any(|x| x == *t))
    };
    let mut best = 0;
    for mask in 0u32..(1 << c.len()) {
        let sub: Vec<&String> = (0..c.len()).filter(|&i| mask & (1 << i) != 0).map(|i| &c[i]).collect();
        if sub.len() > best && is_subseq(&sub) {
            best = sub.len();
        }
    }
    best
}

fn prf(hits: usize, c: usize, r: usize) -> (f64, f64) {
    let p = if c == 0 { 0.0 } else { hits as f64 / c as f64 };
    let rr = if r == 0 { 0.0 } else { hits as f64 / r as f64 };
    (p, rr)
}

fn matches(s: &RougeScore, hits: usize, c: usize, r: usize) -> bool {
    let (p, rr) = prf(hits, c, r);
    let f = if p + rr == 0.0 { 0.0 } else { 2.0 * p * rr / (p + rr) };
    s.precision == p && s.recall == rr && (s.f1 - f).abs() <= 1e-15
}

fn a4_rouge() -> Outcome {
    let mut rng = RngStream::new(404);
    let words = ["a", "b", "c", "d", "e"];
    let mut bad = Vec::new();
    for i in 0..A4_RANDOM_PAIRS {
        let mut draw = || -> Vec<String> {
            let n = rng.gen_range(0..=A4_MAX_LEN);
            (0..n).map(|_| words[rng.gen_range(0..words.len())].to_string()).collect()
        };
        let (c, r) = (draw(), draw());
        for n in 1..=2 {
            let (h, cn, rn) = brute_rouge_n(&c, &r, n);
            if !matches(&rouge_n_single(&c, &r, n), h, cn, rn) {
                bad.push(format!("pair {i} rouge-{n}"));
            }
        }
        if !matches(&rouge_l_single(&c, &r), brute_lcs(&c, &r), c.len(), r.len()) {
            bad.push(format!("pair {i} rouge-l"));
        }
    }
    let hand = [
        (rouge_n_single(&toks("the cat sat"), &toks("the cat sat on the mat"), 1).recall, 0.5),
        (rouge_n_single(&toks("the cat sat"), &toks("the cat sat on the mat"), 2).recall, 0.4),
        (rouge_l_single(&toks("the mat sat cat"), &toks("the cat sat on the mat")).recall, 2.0 / 6.0),
        (rouge_n_single(&toks("the the the"), &toks("the cat"), 1).precision, 1.0 / 3.0),
        (rouge_n(&toks("a b"), &[toks("a c"), toks("a b c d")], 1).recall, 0.5),
    ];
    for (k, (got, want)) in hand.iter().enumerate() {
        if (got - want).abs() > 1e-15 {
            bad.push(format!("hand fixture {k}: {got} != {want}"));
        }
    }
    Outcome::check(
        bad.is_empty(),
        format!("{A4_RANDOM_PAIRS} random pairs x 3 metrics and {} hand fixtures; mismatches: {:?}", hand.len(), bad),
    )
}

// ---------------------------------------------------------------- A5

fn a5_ordering() -> Outcome {
    let entities = FixtureParams::default().entities_per_doc;
    let train = fixture(11, 96);
    let test = fixture(7, 32);
    let vocab = build_vocab(&train, 1, entities);
    let epochs = 60;
    let cfg = TrainConfig { epochs, lr: 0.001, ..TrainConfig::default() };
    let mut t: SentenceTrainer<f32> = SentenceTrainer::new(
        &small_model(vocab.len(), 32, 0.5),
        cfg,
        CurriculumSchedule::Linear { total_epochs: epochs },
    )
    .unwrap();
    for _ in 0..epochs {
        t.train_epoch(&train, &vocab).unwrap();
    }
    let emb: EmbeddingTable<f64> = EmbeddingTable::random(vocab.len(), 32, &mut RngStream::new(5));
    let (xs, ys) = corpus_features(&train, &vocab, &emb).unwrap();
    let lreg = train_lreg(&xs, &ys, &LregOptions::default()).unwrap();

    let k = RunConfig::default().top_k;
    let limit = LimitSpec::None;
    let join =
        |d: &Document, idx: Vec<usize>| -> Vec<String> { idx.iter().flat_map(|&i| d.sentences[i].clone()).collect() };
    let mut systems: Vec<(&str, Vec<SummaryRecord>)> = vec![("nn-se", vec![]), ("lreg", vec![]), ("lead", vec![])];
    for d in &test {
        let p = t.model.score_document(&t.store, d, &vocab, t.config.limits()).unwrap();
        let se = join(d, select_summary_sentences(&p, &d.sentences, k, limit));
        let lr = join(d, lreg.summarize(d, &vocab, &emb, k, limit));
        systems[0].1.push(SummaryRecord { id: d.id.clone(), tokens: se });
        systems[1].1.push(SummaryRecord { id: d.id.clone(), tokens: lr });
        systems[2].1.push(SummaryRecord { id: d.id.clone(), tokens: lead3(d, limit) });
    }
    let refs: Vec<ReferenceSet> =
        test.iter().map(|d| ReferenceSet { id: d.id.clone(), references: vec![d.highlights().concat()] }).collect();
    let reports: Vec<_> = systems
        .iter()
        .map(|(name, sys)| evaluate_corpus(name, sys, &refs, &[limit], Aggregate::Max).unwrap().limits.remove(0))
        .collect();
    let recall: Vec<[f64; 3]> = reports.iter().map(|l| [l.rouge1.recall, l.rouge2.recall, l.rouge_l.recall]).collect();
    let f1: Vec<[f64; 3]> = reports.iter().map(|l| [l.rouge1.f1, l.rouge2.f1, l.rouge_l.f1]).collect();
    let ok = (0..3).all(|m| recall[0][m] >= recall[1][m] && recall[0][m] >= recall[2][m]);
    let fmt = |s: &[f64; 3]| format!("{:.1}/{:.1}/{:.1}", s[0], s[1], s[2]);
    Outcome::check(
        ok,
        format!(
            "ROUGE-1/2/L recall on held-out fixture: nn-se {} lreg {} lead {} (F1: nn-se {} lreg {} lead {})",
            fmt(&recall[0]),
            fmt(&recall[1]),
            fmt(&recall[2]),
            fmt(&f1[0]),
            fmt(&f1[1]),
            fmt(&f1[2])
        ),
    )
}

// ---------------------------------------------------------------- A6

/// Next-symbol distribution drawn from a seed and the full prefix.
struct PrefixModel {
    seed: u64,
    symbols: usize,
}

impl PrefixModel {
    fn logp(&self, prefix: &[usize]) -> Vec<f64> {
        let key = prefix.iter().fold(self.seed, |h, &s| h.wrapping_mul(31).wrapping_add(s as u64 + 1));
        let mut rng = RngStream::new(key);
        let w: Vec<f64> = (0..self.symbols).map(|_| rng.gen_range(0.05..1.0)).collect();
        let z: f64 = w.iter().sum();
        w.iter().map(|x| (x / z).ln()).collect()
    }
}

impl StepModel for PrefixModel {
    type State = Vec<usize>;

    fn initial_state(&self) -> hiersum_core::Result<Vec<usize>> {
        Ok(Vec::new())
    }

    fn num_symbols(&self) -> usize {
        self.symbols
    }

    fn end_symbol(&self) -> usize {
        self.symbols - 1
    }

    fn step(&self, state: &Vec<usize>, prev: Option<usize>) -> hiersum_core::Result<(Vec<f64>, Vec<usize>)> {
        let mut s = state.clone();
        s.extend(prev);
        Ok((self.logp(&s), s))
    }
}

/// Best complete sequence by per-symbol log-probability, ties to the
/// lexicographically smaller sequence.
fn enumerate_best(m: &PrefixModel, max_len: usize) -> (Vec<usize>, f64) {
    fn walk(
        m: &PrefixModel,
        prefix: &mut Vec<usize>,
        lp: f64,
        max_len: usize,
        best: &mut Option<(Vec<usize>, f64, f64)>,
    ) {
        let dist = m.logp(prefix);
        for (s, d) in dist.iter().enumerate() {
            let score = lp + d;
            prefix.push(s);
            if s == m.end_symbol() || prefix.len() == max_len {
                let norm = score / prefix.len() as f64;
                let better = match best {
                    None => true,
                    Some((t, _, n)) => norm > *n || (norm == *n && prefix < t),
                };
                if better {
                    *best = Some((prefix.clone(), score, norm));
                }
            } else {
                walk(m, prefix, score, max_len, best);
            }
            prefix.pop();
        }
    }
    let mut best = None;
    walk(m, &mut Vec::new(), 0.0, max_len, &mut best);
    let (t, lp, _) = best.unwrap();
    (t, lp)
}

fn a6_beam() -> Outcome {
    let mut rng = RngStream::new(606);
    let mut optimal = 0;
    let mut identical = 0;
    for _ in 0..A6_INSTANCES {
        let m = PrefixModel { seed: rng.gen(), symbols: rng.gen_range(2..=5) };
        let max_len = rng.gen_range(1..=4);
        let (want, want_lp) = enumerate_best(&m, max_len);
        let width = m.symbols.pow(max_len as u32);
        let beam = beam_decode(&m, width, max_len).unwrap();
        if beam[0].tokens == want && beam[0].logprob.to_bits() == want_lp.to_bits() {
            optimal += 1;
        }
        let b1 = beam_decode(&m, 1, max_len).unwrap();
        let g = greedy_decode(&m, max_len).unwrap();
        if b1.len() == 1 && b1[0].tokens == g.tokens && b1[0].logprob.to_bits() == g.logprob.to_bits() {
            identical += 1;
        }
    }

    let doc = fixture(3, 1).remove(0);
    let vocab = build_vocab(std::slice::from_ref(&doc), 1, FixtureParams::default().entities_per_doc);
    let mut store = ParamStore::<f32>::new();
    let we = WordExtractor::new(&mut store, &small_model(vocab.len(), 8, 0.0), &mut RngStream::new(9));
    let dec = WordDecoder::for_document(&we, &store, &doc, &vocab, TrainConfig::default().limits()).unwrap();
    let b1 = dec.beam(1, 12).unwrap();
    let g = dec.greedy(12).unwrap();
    let decoder_identical = b1[0].tokens == g.tokens && b1[0].logprob.to_bits() == g.logprob.to_bits();

    Outcome::check(
        optimal == A6_INSTANCES && identical == A6_INSTANCES && decoder_identical,
        format!(
            "enumeration argmax found on {optimal}/{A6_INSTANCES}; width 1 == greedy bit-identical on {identical}/{A6_INSTANCES} toys and word decoder {decoder_identical}"
        ),
    )
}

// ---------------------------------------------------------------- A7

fn a7_labeling() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/labeled20.jsonl");
    let docs: Vec<Document> = read_corpus(&path).unwrap().iter().map(prepare_document).collect();
    let tuned = tune_rule_weights(&docs).unwrap();
    Outcome::check(
        tuned.accuracy >= A7_MIN_ACCURACY,
        format!("tuned rule accuracy {:.3} on {} documents (>= {A7_MIN_ACCURACY})", tuned.accuracy, docs.len()),
    )
}

// ---------------------------------------------------------------- A8

fn se_trainer(vocab: &Vocabulary) -> SentenceTrainer<f32> {
    let cfg = TrainConfig { epochs: A8_EPOCHS, batch_size: 4, seed: 42, ..TrainConfig::default() };
    SentenceTrainer::new(&small_model(vocab.len(), 8, 0.5), cfg, CurriculumSchedule::Linear { total_epochs: A8_EPOCHS })
        .unwrap()
}

fn we_trainer(vocab: &Vocabulary) -> WordTrainer<f32> {
    let cfg = TrainConfig { epochs: A8_EPOCHS, batch_size: 4, seed: 43, noise_samples: 5, ..TrainConfig::default() };
    WordTrainer::new(&small_model(vocab.len(), 8, 0.5), cfg).unwrap()
}

fn a8_determinism() -> Outcome {
    let docs = fixture(8, 12);
    let vocab = build_vocab(&docs, 1, FixtureParams::default().entities_per_doc);
    let run = RunConfig::default();
    let examples: Vec<WordExtractionExample> = docs
        .iter()
        .map(|d| WordExtractionExample { document: d.clone(), target: d.highlights().concat(), substitutions: vec![] })
        .collect();

    let se_bytes = |split: Option<usize>| -> Vec<u8> {
        let mut t = se_trainer(&vocab);
        if let Some(k) = split {
            for _ in 0..k {
                t.train_epoch(&docs, &vocab).unwrap();
            }
            let bytes = Checkpoint::from_sentence_trainer(&t, &run, &vocab).to_bytes().unwrap();
            t = Checkpoint::from_bytes(&bytes).unwrap().sentence_trainer().unwrap();
        }
        while t.epoch < A8_EPOCHS {
            t.train_epoch(&docs, &vocab).unwrap();
        }
        Checkpoint::from_sentence_trainer(&t, &run, &vocab).to_bytes().unwrap()
    };
    let we_bytes = |split: Option<usize>| -> Vec<u8> {
        let mut t = we_trainer(&vocab);
        if let Some(k) = split {
            for _ in 0..k {
                t.train_epoch(&examples, &vocab).unwrap();
            }
            let bytes = Checkpoint::from_word_trainer(&t, &run, &vocab).to_bytes().unwrap();
            t = Checkpoint::from_bytes(&bytes).unwrap().word_trainer().unwrap();
        }
        while t.epoch < A8_EPOCHS {
            t.train_epoch(&examples, &vocab).unwrap();
        }
        Checkpoint::from_word_trainer(&t, &run, &vocab).to_bytes().unwrap()
    };

    let se_ref = se_bytes(None);
    let se_same_seed = se_ref == se_bytes(None);
    let se_resume = (1..A8_EPOCHS).all(|k| se_bytes(Some(k)) == se_ref);
    let we_ref = we_bytes(None);
    let we_same_seed = we_ref == we_bytes(None);
    let we_resume = we_bytes(Some(2)) == we_ref;
    Outcome::check(
        se_same_seed && se_resume && we_same_seed && we_resume,
        format!(
            "{A8_EPOCHS}-epoch checkpoints bit-identical: sentence same-seed {se_same_seed}, resume at every epoch {se_resume}; word same-seed {we_same_seed}, resume {we_resume}"
        ),
    )
}

// ---------------------------------------------------------------- A9

fn a9_duc() -> Outcome {
    let Some(path) = std::env::var_os(A9_ENV) else {
        return Outcome {
            verdict: Verdict::Skip,
            detail: format!("set {A9_ENV} to a corpus with reference highlights"),
        };
    };
    let docs: Vec<Document> = read_corpus(&path).unwrap().iter().map(prepare_document).collect();
    let limit = LimitSpec::Words(100);
    let sys: Vec<SummaryRecord> =
        docs.iter().map(|d| SummaryRecord { id: d.id.clone(), tokens: lead3(d, limit) }).collect();
    let refs = match std::env::var_os(A9_REFS_ENV) {
        Some(p) => load_references(std::path::Path::new(&p)).unwrap(),
        None => {
            docs.iter().map(|d| ReferenceSet { id: d.id.clone(), references: vec![d.highlights().concat()] }).collect()
        }
    };
    let r = evaluate_corpus("lead", &sys, &refs, &[limit], Aggregate::Max).unwrap();
    let r1 = r.limits[0].rouge1.recall;
    Outcome::check(
        (r1 - A9_TARGET_ROUGE1).abs() <= A9_TOLERANCE,
        format!(
            "LEAD-3 ROUGE-1 recall {r1:.1} on {} documents, target {A9_TARGET_ROUGE1} +/- {A9_TOLERANCE}",
            docs.len()
        ),
    )
}
