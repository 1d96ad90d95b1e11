//! Unbiased co-occurrence estimation from document counts.
//!
//! Each document with `n ≥ 2` tokens contributes
//! `C_m = (H Hᵀ − diag(H)) / (n (n − 1))`, which sums to one and whose
//! expectation under multinomial sampling is `p pᵀ`. The corpus estimate
//! averages the admissible contributions.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::matio;

/// Dense symmetric joint-stochastic co-occurrence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CoocMatrix {
    c: DMatrix<f64>,
}

impl CoocMatrix {
    /// Wraps a square matrix. Symmetry and normalization are not enforced.
    pub fn from_matrix(c: DMatrix<f64>) -> Result<Self> {
        if !c.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "co-occurrence matrix must be square, got {}×{}",
                c.nrows(),
                c.ncols()
            )));
        }
        Ok(CoocMatrix { c })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        matio::write_cooc(path, &self.c)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_matrix(matio::read_cooc(path)?)
    }
}

/// Upper-triangle entries `(i, j, value)` with `i ≤ j` of one document's
/// contribution. `None` when the document has fewer than two tokens.
pub fn doc_cooccurrence(doc: &Document) -> Option<Vec<(usize, usize, f64)>> {
    let n = doc.len();
    if n < 2 {
        return None;
    }
    let d = (n * (n - 1)) as f64;
    let counts = doc.counts();
    let mut entries = Vec::with_capacity(counts.len() * (counts.len() + 1) / 2);
    for (a, &(i, hi)) in counts.iter().enumerate() {
        let hi = hi as f64;
        let diag = hi * (hi - 1.0);
        if diag > 0.0 {
            entries.push((i, i, diag / d));
        }
        for &(j, hj) in &counts[a + 1..] {
            entries.push((i, j, hi * hj as f64 / d));
        }
    }
    Some(entries)
}

/// Dense `N×N` contribution of a single document.
pub fn doc_cooccurrence_dense(doc: &Document, n: usize) -> Option<DMatrix<f64>> {
    let entries = doc_cooccurrence(doc)?;
    let mut c = DMatrix::zeros(n, n);
    for (i, j, v) in entries {
        c[(i, j)] = v;
        c[(j, i)] = v;
    }
    Some(c)
}

/// How per-document contributions are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Accumulation {
    /// Single pass in document order; bitwise reproducible.
    #[default]
    Sequential,
    /// Documents split into `chunks` contiguous blocks accumulated in
    /// parallel, then merged by a fixed pairwise tree. Reproducible for a
    /// fixed chunk count.
    Chunked { chunks: usize },
}

fn accumulate(docs: &[Document], n: usize) -> (DMatrix<f64>, usize) {
    let mut acc = DMatrix::<f64>::zeros(n, n);
    let mut admissible = 0;
    for doc in docs {
        // stored column-major; fill the upper triangle via (row=i, col=j), i ≤ j
        if let Some(entries) = doc_cooccurrence(doc) {
            admissible += 1;
            for (i, j, v) in entries {
                acc[(i, j)] += v;
            }
        }
    }
    (acc, admissible)
}

/// Averages the admissible document contributions.
pub fn build_cooccurrence(corpus: &Corpus) -> Result<CoocMatrix> {
    build_cooccurrence_with(corpus, Accumulation::Sequential)
}

pub fn build_cooccurrence_with(corpus: &Corpus, mode: Accumulation) -> Result<CoocMatrix> {
    let n = corpus.vocab_size();
    let docs = corpus.documents();
    let (mut acc, admissible) = match mode {
        Accumulation::Sequential => accumulate(docs, n),
        Accumulation::Chunked { chunks } => {
            let chunks = chunks.max(1);
            let size = docs.len().div_ceil(chunks).max(1);
            let mut parts: Vec<(DMatrix<f64>, usize)> =
                docs.par_chunks(size).map(|c| accumulate(c, n)).collect();
            while parts.len() > 1 {
                parts = parts
                    .par_chunks_mut(2)
                    .map(|pair| match pair {
                        [a, b] => (&a.0 + &b.0, a.1 + b.1),
                        [a] => (std::mem::replace(&mut a.0, DMatrix::zeros(0, 0)), a.1),
                        _ => unreachable!(),
                    })
                    .collect();
            }
            parts.pop().unwrap_or_else(|| (DMatrix::zeros(n, n), 0))
        }
    };
    let skipped = docs.len() - admissible;
    if skipped > 0 {
        log::warn!("skipped {skipped} documents with fewer than two tokens");
    }
    if admissible == 0 {
        return Err(Error::NoAdmissibleDocuments);
    }
    let scale = 1.0 / admissible as f64;
    for j in 0..n {
        for i in 0..=j {
            let v = acc[(i, j)] * scale;
            acc[(i, j)] = v;
            acc[(j, i)] = v;
        }
    }
    Ok(CoocMatrix { c: acc })
}

/// Row-normalized co-occurrence `C̄` with the object marginal `p(X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowNormalized {
    pub cbar: DMatrix<f64>,
    pub p_x: DVector<f64>,
    /// Objects whose marginal was zero; their rows were set to uniform.
    pub zero_rows: Vec<usize>,
}

pub fn row_normalize(c: &DMatrix<f64>) -> Result<RowNormalized> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch("row_normalize needs a square matrix".into()));
    }
    if let Some(v) = c.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "row_normalize needs a non-negative matrix, found {v}"
        )));
    }
    let n = c.nrows();
    let p_x = DVector::from_iterator(n, c.row_iter().map(|r| r.sum()));
    let mut cbar = c.clone();
    let mut zero_rows = Vec::new();
    for i in 0..n {
        if p_x[i] > 0.0 {
            let inv = 1.0 / p_x[i];
            cbar.row_mut(i).iter_mut().for_each(|v| *v *= inv);
        } else {
            zero_rows.push(i);
            cbar.row_mut(i).fill(1.0 / n as f64);
        }
    }
    if !zero_rows.is_empty() {
        log::warn!("{} objects have zero marginal; rows set to uniform", zero_rows.len());
    }
    Ok(RowNormalized { cbar, p_x, zero_rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= tol, "{a} vs {b}");
        }
    }

    #[test]
    fn two_singletons() {
        let c = doc_cooccurrence_dense(&Document::from_dense(&[1, 1, 0]), 3).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_close(&c, &want, 0.0);
    }

    #[test]
    fn repeated_object_keeps_diagonal() {
        let c = doc_cooccurrence_dense(&Document::from_dense(&[2, 0]), 2).unwrap();
        assert_close(&c, &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn mixed_counts_match_pair_enumeration() {
        // tokens a, a, b: enumerate ordered pairs of distinct token positions
        let tokens = [0usize, 0, 1];
        let mut oracle = DMatrix::<f64>::zeros(2, 2);
        let mut pairs = 0.0;
        for (p, &x) in tokens.iter().enumerate() {
            for (q, &y) in tokens.iter().enumerate() {
                if p != q {
                    oracle[(x, y)] += 1.0;
                    pairs += 1.0;
                }
            }
        }
        oracle /= pairs;
        let c = doc_cooccurrence_dense(&Document::from_dense(&[2, 1]), 2).unwrap();
        assert_close(&c, &oracle, 1e-15);
        assert_close(&c, &(DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 0.0]) / 6.0), 1e-15);
    }

    #[test]
    fn short_documents_have_no_contribution() {
        assert!(doc_cooccurrence(&Document::from_dense(&[1, 0])).is_none());
        assert!(doc_cooccurrence(&Document::from_dense(&[0, 0])).is_none());
    }

    #[test]
    fn averages_documents() {
        let docs = vec![Document::from_dense(&[1, 1, 0]), Document::from_dense(&[0, 1, 1])];
        let corpus = Corpus::with_generated_labels(docs, 3).unwrap();
        let c = build_cooccurrence(&corpus).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[0.0, 0.25, 0.0, 0.25, 0.0, 0.25, 0.0, 0.25, 0.0]);
        assert_close(c.matrix(), &want, 0.0);
    }

    #[test]
    fn single_document_is_its_contribution() {
        let doc = Document::from_dense(&[3, 1, 2]);
        let corpus = Corpus::with_generated_labels(vec![doc.clone()], 3).unwrap();
        let c = build_cooccurrence(&corpus).unwrap();
        assert_close(c.matrix(), &doc_cooccurrence_dense(&doc, 3).unwrap(), 1e-16);
    }

    #[test]
    fn skips_short_documents_in_divisor() {
        let docs = vec![Document::from_dense(&[1, 1]), Document::from_dense(&[1, 0])];
        let corpus = Corpus::with_generated_labels(docs, 2).unwrap();
        let c = build_cooccurrence(&corpus).unwrap();
        assert_eq!(c.matrix()[(0, 1)], 0.5);
        let only_short = Corpus::with_generated_labels(vec![Document::from_dense(&[1, 0])], 2).unwrap();
        assert!(matches!(build_cooccurrence(&only_short), Err(Error::NoAdmissibleDocuments)));
    }

    fn random_corpus(seed: u64, n: usize, m: usize) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = (0..m)
            .map(|_| {
                let h: Vec<u32> = (0..n).map(|_| if rng.random_bool(0.3) { rng.random_range(1..4) } else { 0 }).collect();
                Document::from_dense(&h)
            })
            .collect();
        Corpus::with_generated_labels(docs, n).unwrap()
    }

    #[test]
    fn symmetric_and_joint_stochastic() {
        let corpus = random_corpus(7, 15, 200);
        let c = build_cooccurrence(&corpus).unwrap();
        let m = c.matrix();
        assert!((m.sum() - 1.0).abs() <= 1e-10);
        assert_eq!(m, &m.transpose());
        assert!(m.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn chunked_accumulation_is_reproducible() {
        let corpus = random_corpus(11, 12, 301);
        let seq = build_cooccurrence(&corpus).unwrap();
        let a = build_cooccurrence_with(&corpus, Accumulation::Chunked { chunks: 4 }).unwrap();
        let b = build_cooccurrence_with(&corpus, Accumulation::Chunked { chunks: 4 }).unwrap();
        assert_eq!(a, b);
        assert_close(seq.matrix(), a.matrix(), 1e-15);
    }

    #[test]
    fn row_normalize_direct_division() {
        let c = DMatrix::from_row_slice(3, 3, &[0.0, 0.25, 0.0, 0.25, 0.0, 0.25, 0.0, 0.25, 0.0]);
        let rn = row_normalize(&c).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.5, 0.0, 0.5, 0.0, 1.0, 0.0]);
        assert_close(&rn.cbar, &want, 0.0);
        assert_eq!(rn.p_x.as_slice(), &[0.25, 0.5, 0.25]);
        assert!(rn.zero_rows.is_empty());
    }

    #[test]
    fn row_normalize_uniform_marginal() {
        // rows already sum to 1/N each
        let n = 4;
        let c = DMatrix::from_element(n, n, 1.0 / (n * n) as f64);
        let rn = row_normalize(&c).unwrap();
        assert_close(&rn.cbar, &(&c * n as f64), 1e-15);
    }

    #[test]
    fn row_normalize_flags_zero_rows() {
        let c = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        let rn = row_normalize(&c).unwrap();
        assert_eq!(rn.zero_rows, vec![1]);
        assert_eq!(rn.cbar.row(1).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.5]);
        assert!(row_normalize(&DMatrix::from_row_slice(1, 1, &[-1.0])).is_err());
    }

    #[test]
    fn row_normalize_random_rows_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = DMatrix::from_fn(10, 10, |_, _| rng.random::<f64>());
        let rn = row_normalize(&c).unwrap();
        for row in rn.cbar.row_iter() {
            assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn cooc_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = build_cooccurrence(&random_corpus(5, 6, 30)).unwrap();
        let p = dir.path().join("c.bin");
        c.write(&p).unwrap();
        assert_eq!(CoocMatrix::read(&p).unwrap(), c);
    }
}
