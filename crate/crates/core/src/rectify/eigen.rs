//! Truncated symmetric eigendecomposition.
//!
//! The iterative path is a thick-restart Lanczos process with full
//! reorthogonalization. The projected matrix is formed explicitly as
//! `Vᵀ (A V)` and residuals are evaluated exactly from the stored products,
//! so convergence checks do not rely on the tridiagonal recurrence.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A symmetric linear map `x ↦ A x`.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Explicit matrix, when cheap to obtain.
    fn to_dense(&self) -> DMatrix<f64>;
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        // A is symmetric, so row i equals column i (contiguous in column-major storage)
        let data = self.as_slice();
        let dot = |i: usize| -> f64 {
            let col = &data[i * n..(i + 1) * n];
            col.iter().zip(x).map(|(a, b)| a * b).sum()
        };
        if n >= 512 {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = dot(i));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = dot(i));
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenSolver {
    /// Dense below `dense_threshold`, Lanczos above.
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EigenConfig {
    /// Residual bound relative to the largest Ritz value magnitude.
    pub tolerance: f64,
    /// Extra Ritz pairs carried in the search space beyond the requested K.
    pub buffer: usize,
    pub max_restarts: usize,
    pub dense_threshold: usize,
    pub solver: EigenSolver,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            tolerance: 1e-10,
            buffer: 8,
            max_restarts: 1000,
            dense_threshold: 256,
            solver: EigenSolver::Auto,
        }
    }
}

/// The `k` algebraically largest eigenpairs, values descending.
#[derive(Debug, Clone)]
pub struct TruncatedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn truncated_eig(c: &DMatrix<f64>, k: usize, cfg: &EigenConfig) -> Result<TruncatedEigen> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch("eigendecomposition needs a square matrix".into()));
    }
    truncated_eig_op(c, k, cfg)
}

pub fn truncated_eig_op<A: SymmetricOperator>(op: &A, k: usize, cfg: &EigenConfig) -> Result<TruncatedEigen> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("requested {k} eigenpairs of a {n}×{n} matrix")));
    }
    let nev = (k + cfg.buffer).min(n);
    let basis = (2 * nev + 10).max(nev + 20);
    let dense = match cfg.solver {
        EigenSolver::Dense => true,
        EigenSolver::Lanczos => basis >= n,
        EigenSolver::Auto => n <= cfg.dense_threshold || basis >= n,
    };
    if dense {
        Ok(dense_top_k(op.to_dense(), k))
    } else {
        lanczos(op, k, nev, basis, cfg)
    }
}

/// Full dense decomposition, sorted descending, truncated to `k`.
pub fn dense_top_k(mut a: DMatrix<f64>, k: usize) -> TruncatedEigen {
    symmetrize(&mut a);
    let eig = SymmetricEigen::new(a);
    let order = descending_order(eig.eigenvalues.as_slice());
    let values = DVector::from_iterator(k, order[..k].iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(eig.eigenvectors.nrows(), k);
    for (dst, &src) in order[..k].iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    TruncatedEigen { values, vectors }
}

pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Orthogonalizes `v` against the first `cols` columns of `basis`, twice.
fn orthogonalize(basis: &DMatrix<f64>, cols: usize, v: &mut DVector<f64>) {
    for _ in 0..2 {
        for j in 0..cols {
            let q = basis.column(j);
            let d = q.dot(v);
            v.axpy(-d, &q, 1.0);
        }
    }
}

fn lanczos<A: SymmetricOperator>(
    op: &A,
    k: usize,
    nev: usize,
    m: usize,
    cfg: &EigenConfig,
) -> Result<TruncatedEigen> {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4c41_4e43_5a4f_5321);
    let mut random_unit = |basis: &DMatrix<f64>, cols: usize| -> Option<DVector<f64>> {
        for _ in 0..8 {
            let mut v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            orthogonalize(basis, cols, &mut v);
            let norm = v.norm();
            if norm > 1e-8 {
                return Some(v / norm);
            }
        }
        None
    };

    let mut v = DMatrix::<f64>::zeros(n, m);
    let mut av = DMatrix::<f64>::zeros(n, m);
    let mut next = random_unit(&v, 0).expect("non-empty space");
    let mut filled = 0;
    let mut anorm = 0.0f64;
    let keep = (nev + (m - nev) / 2).min(m - 1);
    let mut ax = vec![0.0; n];
    let mut last_residuals = Vec::new();

    for _restart in 0..=cfg.max_restarts {
        while filled < m {
            v.set_column(filled, &next);
            op.apply(next.as_slice(), &mut ax);
            av.column_mut(filled).copy_from_slice(&ax);
            filled += 1;
            let mut f = DVector::from_column_slice(&ax);
            orthogonalize(&v, filled, &mut f);
            let beta = f.norm();
            let scale = anorm.max(DVector::from_column_slice(&ax).norm());
            next = if beta > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                f / beta
            } else {
                // invariant subspace found; continue with a fresh direction
                match random_unit(&v, filled) {
                    Some(u) => u,
                    None => break,
                }
            };
        }

        let mut h = v.columns(0, filled).transpose() * av.columns(0, filled);
        symmetrize(&mut h);
        let eig = SymmetricEigen::new(h);
        let order = descending_order(eig.eigenvalues.as_slice());
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        anorm = anorm.max(theta.iter().fold(0.0f64, |a, t| a.max(t.abs())));

        let take = keep.min(filled);
        let mut z = DMatrix::zeros(filled, take);
        for (dst, &src) in order[..take].iter().enumerate() {
            z.set_column(dst, &eig.eigenvectors.column(src));
        }
        let y = v.columns(0, filled) * &z;
        let ay = av.columns(0, filled) * &z;

        last_residuals = (0..k)
            .map(|i| (ay.column(i) - y.column(i) * theta[i]).norm())
            .collect();
        let bound = cfg.tolerance * anorm.max(f64::MIN_POSITIVE);
        if last_residuals.iter().all(|&r| r <= bound) {
            let values = DVector::from_row_slice(&theta[..k]);
            let mut vectors = y.columns(0, k).into_owned();
            for mut col in vectors.column_iter_mut() {
                let norm = col.norm();
                col /= norm;
            }
            return Ok(TruncatedEigen { values, vectors });
        }

        // thick restart: keep the leading Ritz vectors, continue from `next`
        v.columns_mut(0, take).copy_from(&y);
        av.columns_mut(0, take).copy_from(&ay);
        filled = take;
        orthogonalize(&v, filled, &mut next);
        let norm = next.norm();
        next = if norm > 1e-8 {
            next / norm
        } else {
            match random_unit(&v, filled) {
                Some(u) => u,
                None => break,
            }
        };
    }
    Err(Error::EigenNonConvergence {
        restarts: cfg.max_restarts,
        residuals: last_residuals,
    })
}
