use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::textprep::vocab::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Pretrained,
    Random,
}

/// `|V| x d` word vectors aligned with a vocabulary.
#[derive(Clone, Debug)]
pub struct EmbeddingTable<T> {
    pub matrix: Tensor<T>,
    pub provenance: Vec<Provenance>,
}

impl<T: Scalar> EmbeddingTable<T> {
    /// All rows uniform in `[-0.05, 0.05]`.
    pub fn random<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Self {
        let data = (0..rows * dim).map(|_| T::of(rng.gen_range(-0.05..=0.05))).collect();
        Self { matrix: Tensor::new(vec![rows, dim], data).expect("shape"), provenance: vec![Provenance::Random; rows] }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dims2().1
    }

    pub fn rows(&self) -> usize {
        self.matrix.dims2().0
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.matrix.row_slice(i)
    }

    /// Fraction of rows copied from a pretrained file.
    pub fn coverage(&self) -> f64 {
        if self.provenance.is_empty() {
            return 0.0;
        }
        self.provenance.iter().filter(|p| **p == Provenance::Pretrained).count() as f64 / self.provenance.len() as f64
    }

    /// Cosine similarity between two rows (0 when either is the zero vector).
    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        cosine(self.row(a), self.row(b))
    }
}

pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.to_f64_lossy(), y.to_f64_lossy());
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

/// Reads `token v1 ... vd` lines. An optional word2vec header line
/// (`count dim`) is skipped.
pub fn parse_embeddings<T: Scalar, R: Read, G: Rng + ?Sized>(
    reader: R,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut G,
) -> Result<EmbeddingTable<T>> {
    let mut table = EmbeddingTable::random(vocab.len(), dim, rng);
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        let values = &fields[1..];
        if values.len() != dim {
            return Err(Error::DimMismatch { line: lineno, expected: dim, found: values.len() });
        }
        let parsed: Vec<T> = values
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .map(T::of)
                    .ok_or_else(|| Error::Parse { line: lineno, msg: format!("not a real number: `{v}`") })
            })
            .collect::<Result<_>>()?;
        if let Some(id) = vocab.get(fields[0]) {
            table.matrix.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&parsed);
            table.provenance[id] = Provenance::Pretrained;
        }
    }
    log::info!("embedding coverage {:.3}", table.coverage());
    Ok(table)
}

pub fn load_embeddings<T: Scalar, G: Rng + ?Sized>(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut G,
) -> Result<EmbeddingTable<T>> {
    parse_embeddings(std::fs::File::open(path)?, vocab, dim, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::RngStream;
    use crate::textprep::{build_vocab, Document};

    fn vocab() -> Vocabulary {
        build_vocab(&[Document::from_strs("x", &["car vehicle road"])], 1, 0)
    }

    #[test]
    fn empty_file_is_all_random() {
        let v = vocab();
        let t: EmbeddingTable<f32> = parse_embeddings("".as_bytes(), &v, 3, &mut RngStream::new(1)).unwrap();
        assert_eq!(t.coverage(), 0.0);
        assert!(t.matrix.data().iter().all(|x| x.abs() <= 0.05));
        assert_eq!(t.rows(), v.len());
    }

    #[test]
    fn fixture_rows_are_copied() {
        let v = vocab();
        let text = "3 3\ncar 1 0 0.5\nvehicle 0.9 0.1 0.5\nunseen 1 1 1\nroad -1 2 3\n";
        let t: EmbeddingTable<f64> = parse_embeddings(text.as_bytes(), &v, 3, &mut RngStream::new(1)).unwrap();
        assert_eq!(t.row(v.encode("car")), &[1.0, 0.0, 0.5]);
        assert_eq!(t.row(v.encode("vehicle")), &[0.9, 0.1, 0.5]);
        assert_eq!(t.row(v.encode("road")), &[-1.0, 2.0, 3.0]);
        assert_eq!(t.provenance[v.encode("car")], Provenance::Pretrained);
        assert_eq!(t.provenance[0], Provenance::Random);
    }

    #[test]
    fn full_coverage() {
        let v = vocab();
        let text: String = v.tokens().iter().map(|t| format!("{t} 0.1 0.2\n")).collect();
        let t: EmbeddingTable<f32> = parse_embeddings(text.as_bytes(), &v, 2, &mut RngStream::new(1)).unwrap();
        assert_eq!(t.coverage(), 1.0);
    }

    #[test]
    fn malformed_lines() {
        let v = vocab();
        let r: Result<EmbeddingTable<f32>> =
            parse_embeddings("car 1 2\nroad 1 x\n".as_bytes(), &v, 2, &mut RngStream::new(1));
        assert!(matches!(r, Err(Error::Parse { line: 2, .. })));
        let r: Result<EmbeddingTable<f32>> = parse_embeddings("car 1 2 3\n".as_bytes(), &v, 2, &mut RngStream::new(1));
        assert!(matches!(r, Err(Error::DimMismatch { line: 1, expected: 2, found: 3 })));
    }
}
