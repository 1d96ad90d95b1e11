//! Evaluation metrics for a factorization, computed against the original
//! (unrectified) co-occurrence statistics.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::recover::top_objects;

/// `(1/N) Σ_i ‖C̄_i − Σ_k Θ_ik C̄_{s_k}‖₂`.
pub fn recovery_error(cbar: &DMatrix<f64>, theta: &DMatrix<f64>, anchors: &[usize]) -> Result<f64> {
    let n = cbar.nrows();
    if theta.nrows() != n || theta.ncols() != anchors.len() {
        return Err(Error::DimensionMismatch(format!(
            "C̄ has {n} rows, Θ is {}×{}, {} anchors",
            theta.nrows(),
            theta.ncols(),
            anchors.len()
        )));
    }
    if let Some(&a) = anchors.iter().find(|&&a| a >= n) {
        return Err(Error::DimensionMismatch(format!("anchor {a} outside {n} rows")));
    }
    let basis = cbar.select_rows(anchors);
    let residual = cbar - theta * basis;
    Ok(residual.row_iter().map(|r| r.norm()).sum::<f64>() / n as f64)
}

/// `‖C − B A Bᵀ‖_F`.
pub fn approximation_error(c: &DMatrix<f64>, b: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<f64> {
    if c.nrows() != b.nrows() || c.ncols() != b.nrows() || a.nrows() != b.ncols() || a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "C is {}×{}, B is {}×{}, A is {}×{}",
            c.nrows(),
            c.ncols(),
            b.nrows(),
            b.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    Ok((c - b * a * b.transpose()).norm())
}

/// `(1/K) Σ_k A_kk / Σ_l A_kl`; `None` when some row of `A` sums to zero.
pub fn dominancy(a: &DMatrix<f64>) -> Option<f64> {
    let k = a.nrows();
    let mut total = 0.0;
    for i in 0..k {
        let row = a.row(i).sum();
        if row == 0.0 || !row.is_finite() {
            return None;
        }
        total += a[(i, i)] / row;
    }
    Some(total / k as f64)
}

/// `(1/K) Σ_k KL(B_·k ‖ p(X))` with `0 log 0 = 0`. Mass on an object with
/// `p(X) = 0` makes the result infinite.
pub fn specificity(b: &DMatrix<f64>, p_x: &DVector<f64>) -> Result<f64> {
    if b.nrows() != p_x.len() {
        return Err(Error::DimensionMismatch("B and p(X) disagree on N".into()));
    }
    let mut total = 0.0;
    for col in b.column_iter() {
        for (i, &v) in col.iter().enumerate() {
            if v > 0.0 {
                total += if p_x[i] > 0.0 { v * (v / p_x[i]).ln() } else { f64::INFINITY };
            }
        }
    }
    Ok(total / b.ncols() as f64)
}

/// Average number of each cluster's top-`m` objects that appear in no
/// other cluster's top-`m` list.
pub fn dissimilarity(b: &DMatrix<f64>, m: usize) -> f64 {
    let tops = top_objects(b, m);
    let k = tops.len();
    if k == 0 {
        return 0.0;
    }
    let mut owners = vec![0u32; b.nrows()];
    for top in &tops {
        for &i in top {
            owners[i] += 1;
        }
    }
    let unique: usize = tops.iter().map(|top| top.iter().filter(|&&i| owners[i] == 1).count()).sum();
    unique as f64 / k as f64
}

fn intersect_count(a: &[u32], b: &[u32]) -> u32 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// `(1/K) Σ_k Σ_{x₁ ≠ x₂ ∈ Top_k} ln((D₂(x₁,x₂) + ε) / D₁(x₂))` over ordered pairs.
pub fn coherence(b: &DMatrix<f64>, corpus: &Corpus, m: usize, epsilon: f64) -> Result<f64> {
    if b.nrows() != corpus.vocab_size() {
        return Err(Error::DimensionMismatch(format!(
            "B has {} rows but the corpus vocabulary has {}",
            b.nrows(),
            corpus.vocab_size()
        )));
    }
    let tops = top_objects(b, m);
    let mut words: Vec<usize> = tops.iter().flatten().copied().collect();
    words.sort_unstable();
    words.dedup();
    let postings = corpus.postings(&words);
    let slot = |w: usize| words.binary_search(&w).expect("word collected above");
    let mut total = 0.0;
    for top in &tops {
        for &x2 in top {
            let d1 = postings[slot(x2)].len();
            if d1 == 0 {
                return Err(Error::ZeroDocumentFrequency(x2));
            }
            for &x1 in top {
                if x1 != x2 {
                    let d2 = intersect_count(&postings[slot(x1)], &postings[slot(x2)]);
                    total += ((d2 as f64 + epsilon) / d1 as f64).ln();
                }
            }
        }
    }
    Ok(total / tops.len().max(1) as f64)
}

/// JSON numbers for finite values, `null` for NaN, `"inf"` / `"-inf"` for infinities.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
        Null(()),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None | Some(Repr::Null(())) => Ok(f64::NAN),
            Some(Repr::Num(v)) => Ok(v),
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("bad number {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub k: usize,
    pub n: usize,
    #[serde(with = "extended_f64")]
    pub recovery: f64,
    #[serde(with = "extended_f64")]
    pub approximation: f64,
    /// NaN when undefined; see `dominancy_defined`.
    #[serde(with = "extended_f64")]
    pub dominancy: f64,
    pub dominancy_defined: bool,
    #[serde(with = "extended_f64")]
    pub specificity: f64,
    #[serde(with = "extended_f64")]
    pub dissimilarity: f64,
    #[serde(with = "extended_f64")]
    pub coherence: f64,
}

pub const CSV_HEADER: &str = "method,k,recovery,approximation,dominancy,specificity,dissimilarity,coherence";

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:e}")
    }
}

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method,
            self.k,
            fmt(self.recovery),
            fmt(self.approximation),
            fmt(self.dominancy),
            fmt(self.specificity),
            fmt(self.dissimilarity),
            fmt(self.coherence)
        )
    }

    /// Appends a row, writing the header first if the file is new or empty.
    pub fn append_csv(&self, path: &Path) -> Result<()> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        if fresh {
            text.push_str(CSV_HEADER);
            text.push('\n');
        }
        text.push_str(&self.csv_row());
        text.push('\n');
        file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    #[test]
    fn recovery_zero_when_rows_are_in_the_hull() {
        let cbar = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.3, 0.7]);
        let theta = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.3, 0.7]);
        assert!(recovery_error(&cbar, &theta, &[0, 1]).unwrap() <= 1e-15);
    }

    #[test]
    fn recovery_with_every_row_an_anchor() {
        let cbar = DMatrix::from_row_slice(3, 3, &[0.2, 0.3, 0.5, 0.1, 0.1, 0.8, 0.6, 0.2, 0.2]);
        let theta = DMatrix::<f64>::identity(3, 3);
        assert_eq!(recovery_error(&cbar, &theta, &[0, 1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn recovery_by_hand() {
        let cbar = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
        let theta = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        // third row reconstructs as (1, 0): residual (−0.5, 0.5)
        let want = (0.5f64).sqrt() / 3.0;
        assert!((recovery_error(&cbar, &theta, &[0, 1]).unwrap() - want).abs() <= 1e-15);
        assert!(recovery_error(&cbar, &theta, &[0]).is_err());
    }

    #[test]
    fn approximation_cases() {
        let b = DMatrix::from_row_slice(3, 2, &[0.5, 0.0, 0.5, 0.5, 0.0, 0.5]);
        let a = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.4]);
        let c = &b * &a * b.transpose();
        assert!(approximation_error(&c, &b, &a).unwrap() <= 1e-16);
        assert_eq!(approximation_error(&c, &b, &DMatrix::zeros(2, 2)).unwrap(), c.norm());
        assert!(approximation_error(&c, &b, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn dominancy_cases() {
        assert_eq!(dominancy(&(DMatrix::<f64>::identity(4, 4) / 4.0)), Some(1.0));
        let u = DMatrix::from_element(4, 4, 1.0 / 16.0);
        assert!((dominancy(&u).unwrap() - 0.25).abs() < 1e-15);
        let a = DMatrix::from_row_slice(3, 3, &[0.2, 0.1, 0.0, 0.1, 0.3, 0.05, 0.0, 0.05, 0.2]);
        let want = (0.2 / 0.3 + 0.3 / 0.45 + 0.2 / 0.25) / 3.0;
        assert!((dominancy(&a).unwrap() - want).abs() < 1e-15);
        let z = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        assert_eq!(dominancy(&z), None);
    }

    #[test]
    fn specificity_cases() {
        let p = DVector::from_row_slice(&[0.2, 0.3, 0.5]);
        let b = DMatrix::from_columns(&[p.clone(), p.clone()]);
        assert!(specificity(&b, &p).unwrap().abs() < 1e-15);
        let u = DVector::from_element(4, 0.25);
        let point = DMatrix::from_row_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]);
        assert!((specificity(&point, &u).unwrap() - 4f64.ln()).abs() < 1e-15);
        let z = DVector::from_row_slice(&[1.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5, 0.5]);
        assert_eq!(specificity(&b, &z).unwrap(), f64::INFINITY);
    }

    #[test]
    fn dissimilarity_cases() {
        let same = DMatrix::from_row_slice(3, 2, &[0.5, 0.5, 0.3, 0.3, 0.2, 0.2]);
        assert_eq!(dissimilarity(&same, 2), 0.0);
        let disjoint = DMatrix::from_row_slice(4, 2, &[0.6, 0.0, 0.4, 0.0, 0.0, 0.7, 0.0, 0.3]);
        assert_eq!(dissimilarity(&disjoint, 2), 2.0);
    }

    #[test]
    fn coherence_for_never_cooccurring_pair() {
        // word 0 in docs 0, 1; word 1 in doc 2
        let docs = vec![
            Document::from_dense(&[2, 0]),
            Document::from_dense(&[1, 0]),
            Document::from_dense(&[0, 3]),
        ];
        let corpus = Corpus::with_generated_labels(docs, 2).unwrap();
        let b = DMatrix::from_row_slice(2, 1, &[0.6, 0.4]);
        let got = coherence(&b, &corpus, 2, 1.0).unwrap();
        // (0,1): ln(1/D1(1)) = ln 1; (1,0): ln(1/D1(0)) = ln(1/2)
        assert!((got - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn coherence_perfect_cooccurrence_vanishes_with_epsilon() {
        let docs = vec![Document::from_dense(&[1, 1, 1]), Document::from_dense(&[2, 1, 1])];
        let corpus = Corpus::with_generated_labels(docs, 3).unwrap();
        let b = DMatrix::from_row_slice(3, 1, &[0.5, 0.3, 0.2]);
        let small = coherence(&b, &corpus, 3, 1e-12).unwrap();
        assert!(small.abs() < 1e-11);
        let smoothed = coherence(&b, &corpus, 3, 1.0).unwrap();
        assert!((smoothed - 6.0 * 1.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn report_csv_and_json() {
        let r = MetricsReport {
            method: "ap".into(),
            k: 5,
            n: 100,
            recovery: 0.1,
            approximation: 0.2,
            dominancy: f64::NAN,
            dominancy_defined: false,
            specificity: 1.5,
            dissimilarity: 3.0,
            coherence: -100.0,
        };
        assert_eq!(r.csv_row(), "ap,5,1e-1,2e-1,NaN,1.5e0,3e0,-1e2");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        r.append_csv(&p).unwrap();
        r.append_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with(CSV_HEADER));
        let back = MetricsReport::from_json(&r.to_json()).unwrap();
        assert!(back.dominancy.is_nan());
        assert_eq!(back.csv_row(), r.csv_row());
        let mut inf = r.clone();
        inf.dominancy = 0.5;
        inf.specificity = f64::INFINITY;
        assert_eq!(MetricsReport::from_json(&inf.to_json()).unwrap(), inf);
    }
}
