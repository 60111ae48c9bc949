use crate::textprep::document::Document;
use crate::textprep::vocab::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchLimits {
    pub max_sentences: usize,
    pub max_words: usize,
}

impl Default for BatchLimits {
    fn default() -> Self {
        Self { max_sentences: 30, max_words: 50 }
    }
}

/// Padded `docs x sentences x words` id array with masks.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub ids: Vec<usize>,
    pub num_docs: usize,
    pub max_sentences: usize,
    pub max_words: usize,
    /// `docs x sentences`
    pub sentence_mask: Vec<bool>,
    /// `docs x sentences x words`
    pub word_mask: Vec<bool>,
    pub sentence_counts: Vec<usize>,
    /// `docs x sentences`, zero for padded sentences
    pub word_lengths: Vec<usize>,
}

impl Batch {
    pub fn id(&self, d: usize, s: usize, w: usize) -> usize {
        self.ids[(d * self.max_sentences + s) * self.max_words + w]
    }

    pub fn sentence_real(&self, d: usize, s: usize) -> bool {
        self.sentence_mask[d * self.max_sentences + s]
    }

    pub fn word_len(&self, d: usize, s: usize) -> usize {
        self.word_lengths[d * self.max_sentences + s]
    }

    /// Unpadded ids of one sentence.
    pub fn sentence_ids(&self, d: usize, s: usize) -> &[usize] {
        let start = (d * self.max_sentences + s) * self.max_words;
        &self.ids[start..start + self.word_len(d, s)]
    }
}

/// Pads a non-empty list of documents. Sentences beyond `max_sentences` and
/// words beyond `max_words` are dropped; empty sentences are kept as padding.
pub fn pad_batch(docs: &[&Document], vocab: &Vocabulary, limits: BatchLimits) -> Batch {
    let max_s = docs.iter().map(|d| d.sentences.len()).max().unwrap_or(0).min(limits.max_sentences);
    let max_w =
        docs.iter().flat_map(|d| d.sentences.iter().take(max_s).map(Vec::len)).max().unwrap_or(0).min(limits.max_words);
    let n = docs.len();
    let mut b = Batch {
        ids: vec![Vocabulary::PAD_ID; n * max_s * max_w],
        num_docs: n,
        max_sentences: max_s,
        max_words: max_w,
        sentence_mask: vec![false; n * max_s],
        word_mask: vec![false; n * max_s * max_w],
        sentence_counts: vec![0; n],
        word_lengths: vec![0; n * max_s],
    };
    for (d, doc) in docs.iter().enumerate() {
        let count = doc.sentences.len().min(max_s);
        b.sentence_counts[d] = count;
        for (s, sent) in doc.sentences.iter().take(count).enumerate() {
            let len = sent.len().min(max_w);
            b.sentence_mask[d * max_s + s] = true;
            b.word_lengths[d * max_s + s] = len;
            for (w, tok) in sent.iter().take(len).enumerate() {
                let at = (d * max_s + s) * max_w + w;
                b.ids[at] = vocab.encode(tok);
                b.word_mask[at] = true;
            }
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::build_vocab;

    #[test]
    fn masks_track_real_extent() {
        let a = Document::from_strs("a", &["x y", "z"]);
        let b = Document::from_strs("b", &["x", "y", "z", "x y z", "y"]);
        let v = build_vocab(&[a.clone(), b.clone()], 1, 0);
        let batch = pad_batch(&[&a], &v, BatchLimits::default());
        assert!(batch.sentence_mask.iter().all(|&m| m));
        assert_eq!(batch.word_mask, vec![true, true, true, false]);

        let batch = pad_batch(&[&a, &b], &v, BatchLimits::default());
        let row_sum = |d: usize| {
            batch.sentence_mask[d * batch.max_sentences..(d + 1) * batch.max_sentences].iter().filter(|&&m| m).count()
        };
        assert_eq!((row_sum(0), row_sum(1)), (2, 5));
        for (i, &m) in batch.word_mask.iter().enumerate() {
            if !m {
                assert_eq!(batch.ids[i], Vocabulary::PAD_ID);
            }
        }
        assert_eq!(batch.sentence_ids(1, 3), &[v.encode("x"), v.encode("y"), v.encode("z")]);
    }

    #[test]
    fn truncation_limits() {
        let a = Document::from_strs("a", &["a b c d", "e", "f"]);
        let v = build_vocab(std::slice::from_ref(&a), 1, 0);
        let batch = pad_batch(&[&a], &v, BatchLimits { max_sentences: 2, max_words: 3 });
        assert_eq!((batch.max_sentences, batch.max_words), (2, 3));
        assert_eq!(batch.sentence_ids(0, 0).len(), 3);
        assert_eq!(batch.sentence_counts, vec![2]);
    }
}
