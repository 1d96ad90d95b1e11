//! Anchor (basis object) selection by greedy pivoted Gram-Schmidt on the
//! rows of `C̄`, and 2D PCA coordinates for convex-hull plots.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rectify::eigen::{truncated_eig_op, EigenConfig, SymmetricOperator};

/// Residual norm at or below which a row is treated as lying in the span.
pub const RANK_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub indices: Vec<usize>,
    /// Residual norm of each anchor row when it was pivoted.
    pub residual_norms: Vec<f64>,
    /// Orthonormal basis rows (`K × N`) built during selection.
    #[serde(skip)]
    pub basis: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct AnchorFile {
    indices: Vec<usize>,
    labels: Vec<String>,
    residual_norms: Vec<f64>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// JSON with indices, labels and residual norms.
    pub fn write_json(&self, path: &Path, labels: &[String]) -> Result<()> {
        let file = AnchorFile {
            indices: self.indices.clone(),
            labels: self
                .indices
                .iter()
                .map(|&i| labels.get(i).cloned().unwrap_or_else(|| i.to_string()))
                .collect(),
            residual_norms: self.residual_norms.clone(),
        };
        let text = serde_json::to_string_pretty(&file).expect("anchor file serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reads indices and residual norms; the basis is not stored and comes
    /// back empty.
    pub fn read_json(path: &Path) -> Result<(Self, Vec<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: AnchorFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        Ok((
            AnchorSet {
                indices: file.indices,
                residual_norms: file.residual_norms,
                basis: DMatrix::zeros(0, 0),
            },
            file.labels,
        ))
    }
}

/// A row of `C̄`, stored sparsely when at most a quarter of it is non-zero.
enum Row {
    Sparse(Vec<(usize, f64)>),
    Dense(Vec<f64>),
}

impl Row {
    fn dot(&self, q: &[f64]) -> f64 {
        match self {
            Row::Sparse(entries) => entries.iter().map(|&(j, v)| v * q[j]).sum(),
            Row::Dense(values) => values.iter().zip(q).map(|(a, b)| a * b).sum(),
        }
    }

    fn norm_squared(&self) -> f64 {
        match self {
            Row::Sparse(entries) => entries.iter().map(|&(_, v)| v * v).sum(),
            Row::Dense(values) => values.iter().map(|v| v * v).sum(),
        }
    }

    fn to_dense(&self, n: usize) -> Vec<f64> {
        match self {
            Row::Sparse(entries) => {
                let mut out = vec![0.0; n];
                for &(j, v) in entries {
                    out[j] = v;
                }
                out
            }
            Row::Dense(values) => values.clone(),
        }
    }
}

fn split_rows(cbar: &DMatrix<f64>) -> Vec<Row> {
    let n = cbar.ncols();
    (0..cbar.nrows())
        .map(|i| {
            let row = cbar.row(i);
            let nnz = row.iter().filter(|v| **v != 0.0).count();
            if nnz * 4 <= n {
                Row::Sparse(row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (j, v)).collect())
            } else {
                Row::Dense(row.iter().copied().collect())
            }
        })
        .collect()
}

/// Squared residuals of every row just before each pivot was chosen.
#[derive(Debug, Clone, Default)]
pub struct PivotTrace {
    pub residuals: Vec<Vec<f64>>,
}

pub fn select_anchors(cbar: &DMatrix<f64>, k: usize) -> Result<AnchorSet> {
    select_anchors_traced(cbar, k, None)
}

/// Same as [`select_anchors`], recording the residual vector at each step.
pub fn select_anchors_traced(cbar: &DMatrix<f64>, k: usize, mut trace: Option<&mut PivotTrace>) -> Result<AnchorSet> {
    let n_rows = cbar.nrows();
    let n = cbar.ncols();
    if k == 0 || k > n_rows {
        return Err(Error::InvalidArgument(format!("cannot select {k} anchors from {n_rows} rows")));
    }
    let rows = split_rows(cbar);
    let mut residual: Vec<f64> = rows.iter().map(Row::norm_squared).collect();
    let mut selected = vec![false; n_rows];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut indices = Vec::with_capacity(k);
    let mut residual_norms = Vec::with_capacity(k);

    for step in 0..k {
        if let Some(t) = trace.as_deref_mut() {
            t.residuals.push(residual.clone());
        }
        let mut pivot = None;
        let mut best = f64::NEG_INFINITY;
        for (i, &r) in residual.iter().enumerate() {
            if !selected[i] && r > best {
                best = r;
                pivot = Some(i);
            }
        }
        let pivot = pivot.expect("k ≤ rows leaves a candidate");
        let norm = best.max(0.0).sqrt();
        if norm <= RANK_THRESHOLD {
            return Err(Error::RankDeficient {
                found: step,
                requested: k,
            });
        }

        let mut q = rows[pivot].to_dense(n);
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = b.iter().zip(&q).map(|(x, y)| x * y).sum();
                q.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if qn <= RANK_THRESHOLD {
            return Err(Error::RankDeficient {
                found: step,
                requested: k,
            });
        }
        q.iter_mut().for_each(|v| *v /= qn);

        selected[pivot] = true;
        residual[pivot] = 0.0;
        indices.push(pivot);
        residual_norms.push(norm);
        basis.push(q);

        let q = basis.last().expect("just pushed");
        let update = |(i, r): (usize, &mut f64)| {
            if selected[i] {
                return;
            }
            let d = rows[i].dot(q);
            *r -= d * d;
            if *r < 0.0 {
                // rounding drove the downdate negative: recompute against the full basis
                let proj: f64 = basis.iter().map(|b| rows[i].dot(b).powi(2)).sum();
                *r = (rows[i].norm_squared() - proj).max(0.0);
            }
        };
        if n_rows >= 1024 {
            residual.par_iter_mut().enumerate().for_each(update);
        } else {
            residual.iter_mut().enumerate().for_each(update);
        }
    }

    let basis = DMatrix::from_fn(k, n, |i, j| basis[i][j]);
    Ok(AnchorSet {
        indices,
        residual_norms,
        basis,
    })
}

/// Top-2 principal component scores of the mean-centered rows of `C̄`.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub mean: DVector<f64>,
    /// Principal axes as columns (`N × 2`).
    pub components: DMatrix<f64>,
    /// Scores (`rows × 2`).
    pub coords: DMatrix<f64>,
}

struct CenteredGram<'a> {
    x: &'a DMatrix<f64>,
}

impl SymmetricOperator for CenteredGram<'_> {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn apply(&self, v: &[f64], y: &mut [f64]) {
        let v = DVector::from_column_slice(v);
        let xv = self.x * v;
        let out = self.x.tr_mul(&xv);
        y.copy_from_slice(out.as_slice());
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.x.tr_mul(self.x)
    }
}

pub fn pca_embedding(cbar: &DMatrix<f64>) -> Result<Embedding> {
    let (rows, n) = cbar.shape();
    if rows < 2 || n < 2 {
        return Err(Error::InvalidArgument("embedding needs at least two objects".into()));
    }
    let mean = DVector::from_iterator(n, cbar.column_iter().map(|c| c.mean()));
    let mut x = cbar.clone();
    for mut row in x.row_iter_mut() {
        row -= mean.transpose();
    }
    let eig = truncated_eig_op(&CenteredGram { x: &x }, 2, &EigenConfig::default())?;
    let mut components = eig.vectors;
    for mut col in components.column_iter_mut() {
        // sign convention: largest-magnitude loading is positive
        let (imax, _) = col.iter().enumerate().fold((0, 0.0f64), |acc, (i, v)| {
            if v.abs() > acc.1 {
                (i, v.abs())
            } else {
                acc
            }
        });
        if col[imax] < 0.0 {
            col.neg_mut();
        }
    }
    let coords = &x * &components;
    Ok(Embedding {
        mean,
        components,
        coords,
    })
}

/// Writes `index,label,x,y,is_anchor` for every object.
pub fn export_embedding(cbar: &DMatrix<f64>, anchors: &AnchorSet, labels: &[String], out_path: &Path) -> Result<Embedding> {
    let emb = pca_embedding(cbar)?;
    let mut is_anchor = vec![false; cbar.nrows()];
    for &a in &anchors.indices {
        if a >= is_anchor.len() {
            return Err(Error::DimensionMismatch(format!("anchor {a} outside {} objects", is_anchor.len())));
        }
        is_anchor[a] = true;
    }
    let file = File::create(out_path).map_err(|e| Error::io(out_path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(out_path, e);
    writeln!(w, "index,label,x,y,is_anchor").map_err(io)?;
    for i in 0..cbar.nrows() {
        let label = labels.get(i).map(String::as_str).unwrap_or("");
        let label = if label.contains([',', '"']) {
            format!("\"{}\"", label.replace('"', "\"\""))
        } else {
            label.to_string()
        };
        writeln!(
            w,
            "{i},{label},{:e},{:e},{}",
            emb.coords[(i, 0)],
            emb.coords[(i, 1)],
            u8::from(is_anchor[i])
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(emb)
}
