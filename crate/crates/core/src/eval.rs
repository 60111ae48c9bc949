//! ROUGE-1, ROUGE-2 and ROUGE-L with length limits, and corpus reports.
//!
//! Scoring uses exact token matches (no stemming or stop-word removal).
//! Length limits apply to the system summary only. With several references
//! the per-reference score with the highest F1 is kept (or all are averaged
//! with [`Aggregate::Mean`]).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LimitSpec {
    Words(usize),
    Bytes(usize),
    None,
}

impl FromStr for LimitSpec {
    type Err = Error;

    /// `words:N`, `bytes:N`, or `none`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("full") {
            return Ok(Self::None);
        }
        let (kind, amount) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("limit `{s}`: expected words:N, bytes:N or none")))?;
        let amount: usize = amount.parse().map_err(|_| Error::Config(format!("limit `{s}`: bad amount")))?;
        if amount == 0 {
            return Err(Error::Config(format!("limit `{s}`: amount must be positive")));
        }
        match kind {
            "words" => Ok(Self::Words(amount)),
            "bytes" => Ok(Self::Bytes(amount)),
            _ => Err(Error::Config(format!("limit `{s}`: unknown kind `{kind}`"))),
        }
    }
}

impl fmt::Display for LimitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Words(n) => write!(f, "words:{n}"),
            Self::Bytes(n) => write!(f, "bytes:{n}"),
            Self::None => write!(f, "none"),
        }
    }
}

/// Byte length of the tokens joined by single spaces.
pub fn detokenized_len(tokens: &[String]) -> usize {
    if tokens.is_empty() {
        0
    } else {
        tokens.iter().map(String::len).sum::<usize>() + tokens.len() - 1
    }
}

impl LimitSpec {
    /// True when `tokens` fits under the limit.
    pub fn fits(&self, tokens: &[String]) -> bool {
        match *self {
            Self::Words(n) => tokens.len() <= n,
            Self::Bytes(n) => detokenized_len(tokens) <= n,
            Self::None => true,
        }
    }
}

/// Longest token prefix within the limit.
pub fn truncate(tokens: &[String], limit: LimitSpec) -> Vec<String> {
    match limit {
        LimitSpec::None => tokens.to_vec(),
        LimitSpec::Words(n) => tokens.iter().take(n).cloned().collect(),
        LimitSpec::Bytes(n) => {
            let mut used = 0;
            let mut out = Vec::new();
            for t in tokens {
                let extra = t.len() + usize::from(!out.is_empty());
                if used + extra > n {
                    break;
                }
                used += extra;
                out.push(t.clone());
            }
            out
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let p = if candidate_total == 0 { 0.0 } else { overlap as f64 / candidate_total as f64 };
        let r = if reference_total == 0 { 0.0 } else { overlap as f64 / reference_total as f64 };
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        Self { precision: p, recall: r, f1 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregate {
    #[default]
    Max,
    Mean,
}

fn aggregate(scores: impl IntoIterator<Item = RougeScore>, how: Aggregate) -> RougeScore {
    let scores: Vec<RougeScore> = scores.into_iter().collect();
    if scores.is_empty() {
        return RougeScore::default();
    }
    match how {
        Aggregate::Max => scores.into_iter().fold(None::<RougeScore>, |best, s| match best {
            Some(b) if b.f1 >= s.f1 => Some(b),
            _ => Some(s),
        }),
        Aggregate::Mean => {
            let k = scores.len() as f64;
            Some(RougeScore {
                precision: scores.iter().map(|s| s.precision).sum::<f64>() / k,
                recall: scores.iter().map(|s| s.recall).sum::<f64>() / k,
                f1: scores.iter().map(|s| s.f1).sum::<f64>() / k,
            })
        }
    }
    .unwrap_or_default()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped n-gram overlap against one reference.
pub fn rouge_n_single(candidate: &[String], reference: &[String], n: usize) -> RougeScore {
    let c = ngram_counts(candidate, n);
    let r = ngram_counts(reference, n);
    let overlap = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    RougeScore::from_counts(overlap, c.values().sum(), r.values().sum())
}

pub fn rouge_n_with(candidate: &[String], references: &[Vec<String>], n: usize, how: Aggregate) -> RougeScore {
    aggregate(references.iter().map(|r| rouge_n_single(candidate, r, n)), how)
}

pub fn rouge_n(candidate: &[String], references: &[Vec<String>], n: usize) -> RougeScore {
    rouge_n_with(candidate, references, n, Aggregate::Max)
}

/// Longest common subsequence length by dynamic programming.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_single(candidate: &[String], reference: &[String]) -> RougeScore {
    RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

pub fn rouge_l_with(candidate: &[String], references: &[Vec<String>], how: Aggregate) -> RougeScore {
    aggregate(references.iter().map(|r| rouge_l_single(candidate, r)), how)
}

pub fn rouge_l(candidate: &[String], references: &[Vec<String>]) -> RougeScore {
    rouge_l_with(candidate, references, Aggregate::Max)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeSet {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
}

/// All three metrics for one summary after truncation.
pub fn score_summary(candidate: &[String], references: &[Vec<String>], limit: LimitSpec, how: Aggregate) -> RougeSet {
    let c = truncate(candidate, limit);
    RougeSet {
        rouge1: rouge_n_with(&c, references, 1, how),
        rouge2: rouge_n_with(&c, references, 2, how),
        rouge_l: rouge_l_with(&c, references, how),
    }
}

/// One system summary, `{id, tokens}` in JSONL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub id: String,
    pub tokens: Vec<String>,
}

/// Reference summaries for one document, `{id, references}` in JSONL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub id: String,
    pub references: Vec<Vec<String>>,
}

/// Which of precision/recall/F1 the plain-text table shows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Precision,
    #[default]
    Recall,
    F1,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" | "precision" => Ok(Self::Precision),
            "r" | "recall" => Ok(Self::Recall),
            "f" | "f1" => Ok(Self::F1),
            _ => Err(Error::Config(format!("metric `{s}`: expected precision, recall or f1"))),
        }
    }
}

impl Metric {
    pub fn pick(&self, s: &RougeScore) -> f64 {
        match self {
            Self::Precision => s.precision,
            Self::Recall => s.recall,
            Self::F1 => s.f1,
        }
    }
}

/// Macro averages ×100 for one limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub limit: String,
    pub documents: usize,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub system: String,
    pub limits: Vec<LimitReport>,
}

fn scaled_mean(xs: &[RougeScore]) -> RougeScore {
    if xs.is_empty() {
        return RougeScore::default();
    }
    let k = xs.len() as f64;
    RougeScore {
        precision: 100.0 * xs.iter().map(|s| s.precision).sum::<f64>() / k,
        recall: 100.0 * xs.iter().map(|s| s.recall).sum::<f64>() / k,
        f1: 100.0 * xs.iter().map(|s| s.f1).sum::<f64>() / k,
    }
}

/// Scores every system summary against the references with the same id.
/// Both sides must cover exactly the same ids.
pub fn evaluate_corpus(
    system_name: &str,
    system: &[SummaryRecord],
    references: &[ReferenceSet],
    limits: &[LimitSpec],
    how: Aggregate,
) -> Result<CorpusReport> {
    let refs: BTreeMap<&str, &ReferenceSet> = references.iter().map(|r| (r.id.as_str(), r)).collect();
    let sys_ids: BTreeSet<&str> = system.iter().map(|s| s.id.as_str()).collect();
    let mut offenders: Vec<String> = Vec::new();
    offenders.extend(system.iter().filter(|s| !refs.contains_key(s.id.as_str())).map(|s| format!("system:{}", s.id)));
    offenders.extend(refs.keys().filter(|id| !sys_ids.contains(*id)).map(|id| format!("reference:{id}")));
    if sys_ids.len() != system.len() {
        let mut seen = BTreeSet::new();
        offenders.extend(system.iter().filter(|s| !seen.insert(s.id.as_str())).map(|s| format!("duplicate:{}", s.id)));
    }
    if !offenders.is_empty() {
        return Err(Error::Alignment(offenders));
    }
    let limits = limits
        .iter()
        .map(|&limit| {
            let scored: Vec<RougeSet> =
                system.iter().map(|s| score_summary(&s.tokens, &refs[s.id.as_str()].references, limit, how)).collect();
            let col = |f: fn(&RougeSet) -> RougeScore| scaled_mean(&scored.iter().map(f).collect::<Vec<_>>());
            LimitReport {
                limit: limit.to_string(),
                documents: scored.len(),
                rouge1: col(|s| s.rouge1),
                rouge2: col(|s| s.rouge2),
                rouge_l: col(|s| s.rouge_l),
            }
        })
        .collect();
    Ok(CorpusReport { system: system_name.to_string(), limits })
}

/// Aligned plain-text table, one block per limit, one row per system.
pub fn render_table(reports: &[CorpusReport], metric: Metric) -> String {
    let mut out = String::new();
    let limits: Vec<&str> =
        reports.first().map(|r| r.limits.iter().map(|l| l.limit.as_str()).collect()).unwrap_or_default();
    let width = reports.iter().map(|r| r.system.len()).max().unwrap_or(0).max(8);
    for (k, limit) in limits.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        out.push_str(&format!("{:<width$}  {:>7}  {:>7}  {:>7}\n", limit, "ROUGE-1", "ROUGE-2", "ROUGE-L"));
        for r in reports {
            if let Some(l) = r.limits.get(k) {
                out.push_str(&format!(
                    "{:<width$}  {:>7.1}  {:>7.1}  {:>7.1}\n",
                    r.system,
                    metric.pick(&l.rouge1),
                    metric.pick(&l.rouge2),
                    metric.pick(&l.rouge_l)
                ));
            }
        }
    }
    out
}
