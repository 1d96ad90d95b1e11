//! Recovery of `Θ = p(Z|X)`, `B = p(X|Z)` and the cluster-cluster matrix `A`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::error::{Error, Result};

/// Exponentiated-gradient settings for the per-object simplex QP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EgConfig {
    pub step_size: f64,
    pub max_iterations: usize,
    pub kkt_tolerance: f64,
    /// Finish with an exact active-set solve on the simplex.
    pub polish: bool,
}

impl Default for EgConfig {
    fn default() -> Self {
        EgConfig {
            step_size: 50.0,
            max_iterations: 500,
            kkt_tolerance: 1e-7,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgOutcome {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Duality gap `⟨c, g⟩ − min_k g_k` at the returned point.
    pub kkt_residual: f64,
    /// Objective before the first step and after every accepted step.
    pub objectives: Vec<f64>,
}

/// Anchor rows of `C̄` with their Gram matrix, shared by every row solve.
pub struct AnchorBasis {
    rows: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl AnchorBasis {
    /// `rows` is `K × N`, one anchor row of `C̄` per row.
    pub fn new(rows: DMatrix<f64>) -> Self {
        let gram = &rows * rows.transpose();
        AnchorBasis { rows, gram }
    }

    pub fn from_cbar(cbar: &DMatrix<f64>, anchors: &[usize]) -> Self {
        Self::new(cbar.select_rows(anchors))
    }

    pub fn k(&self) -> usize {
        self.rows.nrows()
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }
}

struct Quadratic<'a> {
    gram: &'a DMatrix<f64>,
    linear: DVector<f64>,
    constant: f64,
}

impl Quadratic<'_> {
    // ‖r − Xᵀc‖² = rᵀr − 2 cᵀ(Xr) + cᵀ G c
    fn value(&self, c: &DVector<f64>) -> f64 {
        (self.constant - 2.0 * c.dot(&self.linear) + c.dot(&(self.gram * c))).max(0.0)
    }

    fn gradient(&self, c: &DVector<f64>) -> DVector<f64> {
        (self.gram * c - &self.linear) * 2.0
    }
}

fn duality_gap(c: &DVector<f64>, g: &DVector<f64>) -> f64 {
    (c.dot(g) - g.min()).max(0.0)
}

/// Minimizer of the quadratic over `{c : Σ_{k∈F} c_k = 1, c_k = 0 off F}`.
fn face_minimizer(q: &Quadratic<'_>, free: &[usize]) -> Option<DVector<f64>> {
    let m = free.len();
    let g = DMatrix::from_fn(m, m, |i, j| q.gram[(free[i], free[j])]);
    let chol = g.cholesky()?;
    let b = DVector::from_fn(m, |i, _| q.linear[free[i]]);
    let gb = chol.solve(&b);
    let g1 = chol.solve(&DVector::from_element(m, 1.0));
    let denom = g1.sum();
    if !(denom.abs() > 0.0) {
        return None;
    }
    let nu = (1.0 - gb.sum()) / denom;
    let x = gb + g1 * nu;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Primal active-set method for the simplex QP, started from a feasible `c`.
/// Every step moves along a segment towards a face minimizer, so the
/// objective never increases.
fn active_set(q: &Quadratic<'_>, start: &DVector<f64>) -> Option<DVector<f64>> {
    let k = start.len();
    let mut c = start.clone();
    let mut free: Vec<usize> = (0..k).filter(|&i| c[i] > 0.0).collect();
    for _ in 0..4 * k + 4 {
        let x = face_minimizer(q, &free)?;
        let mut step = 1.0f64;
        let mut blocking = None;
        for (slot, &i) in free.iter().enumerate() {
            let p = x[slot] - c[i];
            if p < 0.0 && x[slot] < 0.0 {
                let t = c[i] / -p;
                if t < step {
                    step = t;
                    blocking = Some(slot);
                }
            }
        }
        for (slot, &i) in free.iter().enumerate() {
            c[i] += step * (x[slot] - c[i]);
        }
        if let Some(slot) = blocking {
            c[free[slot]] = 0.0;
            free.remove(slot);
            for &i in &free {
                c[i] = c[i].max(0.0);
            }
            let s = c.sum();
            c /= s;
            continue;
        }
        // face optimum reached; add the most violating inactive coordinate
        let g = q.gradient(&c);
        let lambda = free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64;
        let tol = 1e-13 * (1.0 + g.amax());
        let enter = (0..k)
            .filter(|i| !free.contains(i))
            .map(|i| (i, g[i] - lambda))
            .filter(|&(_, d)| d < -tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match enter {
            Some((i, _)) => {
                free.push(i);
                free.sort_unstable();
            }
            None => return Some(c),
        }
    }
    None
}

/// Minimizes `‖row − Σ_k c_k anchor_k‖²` over the simplex by multiplicative
/// updates `c ← c ⊙ exp(−η ∇)`, renormalized. A step that would increase
/// the objective is retried with half the step size. With `polish` set, the
/// EG point seeds an exact active-set solve, kept only if it is no worse.
pub fn recover_row(row: &[f64], basis: &AnchorBasis, cfg: &EgConfig) -> EgOutcome {
    let k = basis.k();
    if k == 1 {
        return EgOutcome {
            coefficients: vec![1.0],
            iterations: 0,
            converged: true,
            kkt_residual: 0.0,
            objectives: Vec::new(),
        };
    }
    let r = DVector::from_column_slice(row);
    let q = Quadratic {
        gram: &basis.gram,
        linear: &basis.rows * &r,
        constant: r.norm_squared(),
    };
    let mut c = DVector::from_element(k, 1.0 / k as f64);
    let mut f = q.value(&c);
    let mut g = q.gradient(&c);
    let mut gap = duality_gap(&c, &g);
    let mut objectives = vec![f];
    let mut iterations = 0;
    while gap > cfg.kkt_tolerance && iterations < cfg.max_iterations {
        iterations += 1;
        let mut eta = cfg.step_size;
        let mut accepted = None;
        for _ in 0..60 {
            let gmin = g.min();
            // shift by the minimum gradient so the largest factor is exp(0) = 1
            let mut next = c.zip_map(&g, |ci, gi| ci * (-eta * (gi - gmin)).exp());
            let s = next.sum();
            if s > 0.0 && s.is_finite() {
                next /= s;
                let fn_ = q.value(&next);
                if fn_ <= f {
                    accepted = Some((next, fn_));
                    break;
                }
            }
            eta *= 0.5;
        }
        let Some((next, fn_)) = accepted else {
            // no descent step at working precision
            break;
        };
        c = next;
        f = fn_;
        g = q.gradient(&c);
        gap = duality_gap(&c, &g);
        objectives.push(f);
    }
    if cfg.polish && gap > 0.0 {
        if let Some(refined) = active_set(&q, &c) {
            let fr = q.value(&refined);
            if fr <= f {
                c = refined;
                f = fr;
                g = q.gradient(&c);
                gap = duality_gap(&c, &g);
                objectives.push(f);
            }
        }
    }
    EgOutcome {
        coefficients: c.as_slice().to_vec(),
        iterations,
        converged: gap <= cfg.kkt_tolerance,
        kkt_residual: gap,
        objectives,
    }
}

/// Row-stochastic `Θ` (`N × K`) with per-row solver diagnostics.
#[derive(Debug, Clone)]
pub struct ThetaFit {
    pub theta: DMatrix<f64>,
    pub unconverged: Vec<usize>,
    pub max_kkt_residual: f64,
}

/// Solves every row of `C̄` against the anchor rows, in parallel.
pub fn recover_theta(cbar: &DMatrix<f64>, anchors: &[usize], cfg: &EgConfig) -> Result<ThetaFit> {
    let n = cbar.nrows();
    if let Some(&a) = anchors.iter().find(|&&a| a >= n) {
        return Err(Error::DimensionMismatch(format!("anchor {a} outside {n} rows")));
    }
    let basis = AnchorBasis::from_cbar(cbar, anchors);
    let k = anchors.len();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| cbar.row(i).iter().copied().collect()).collect();
    let outcomes: Vec<EgOutcome> = rows.par_iter().map(|row| recover_row(row, &basis, cfg)).collect();
    let mut theta = DMatrix::zeros(n, k);
    let mut unconverged = Vec::new();
    let mut max_kkt_residual = 0.0f64;
    for (i, o) in outcomes.iter().enumerate() {
        for (j, &v) in o.coefficients.iter().enumerate() {
            theta[(i, j)] = v;
        }
        if !o.converged {
            unconverged.push(i);
        }
        max_kkt_residual = max_kkt_residual.max(o.kkt_residual);
    }
    if !unconverged.is_empty() {
        log::warn!(
            "{} of {n} rows did not reach the KKT tolerance (max residual {max_kkt_residual:e})",
            unconverged.len()
        );
    }
    Ok(ThetaFit {
        theta,
        unconverged,
        max_kkt_residual,
    })
}

/// Bayes' rule: `B_ik ∝ Θ_ik p(X = i)`, normalized per column.
pub fn recover_b(theta: &DMatrix<f64>, p_x: &DVector<f64>) -> Result<DMatrix<f64>> {
    if theta.nrows() != p_x.len() {
        return Err(Error::DimensionMismatch(format!(
            "Θ has {} rows but p(X) has {} entries",
            theta.nrows(),
            p_x.len()
        )));
    }
    let mut b = theta.clone();
    for (i, mut row) in b.row_iter_mut().enumerate() {
        row *= p_x[i];
    }
    for (k, mut col) in b.column_iter_mut().enumerate() {
        let mass = col.sum();
        if !(mass > 0.0) {
            return Err(Error::EmptyCluster(k));
        }
        col /= mass;
    }
    Ok(b)
}

/// Default threshold below which an anchor's diagonal entry of `B` counts as vanishing.
pub const DEFAULT_EPS_D: f64 = 1e-12;

/// `A = D⁻¹ C_SS D⁻¹` with `D = diag(B_{s_k, k})`.
pub fn recover_a_anchor(c: &DMatrix<f64>, anchors: &[usize], b: &DMatrix<f64>, eps_d: f64) -> Result<DMatrix<f64>> {
    let k = anchors.len();
    if b.ncols() != k || c.nrows() != b.nrows() || !c.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "C is {}×{}, B is {}×{}, {k} anchors",
            c.nrows(),
            c.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let d: Vec<f64> = anchors.iter().enumerate().map(|(j, &s)| b[(s, j)]).collect();
    if let Some(j) = d.iter().position(|&v| !(v > eps_d)) {
        return Err(Error::VanishingAnchor(j));
    }
    let mut a = DMatrix::from_fn(k, k, |p, q| c[(anchors[p], anchors[q])] / (d[p] * d[q]));
    crate::rectify::eigen::symmetrize(&mut a);
    Ok(a)
}

/// Least-squares baseline `A = B⁺ C (Bᵀ)⁺`, symmetrized.
pub fn recover_a_lsq(c: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if c.nrows() != b.nrows() || !c.is_square() {
        return Err(Error::DimensionMismatch("C and B disagree on N".into()));
    }
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let tol = smax * (b.nrows().max(b.ncols()) as f64) * f64::EPSILON;
    if !(smin > tol) {
        return Err(Error::RankDeficientB(smin));
    }
    let pinv = svd
        .pseudo_inverse(tol)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let a = &pinv * c * pinv.transpose();
    Ok((&a + a.transpose()) * 0.5)
}

/// A fitted factorization `C ≈ B A Bᵀ`.
#[derive(Debug, Clone)]
pub struct TopicModel {
    pub b: DMatrix<f64>,
    pub a: Option<DMatrix<f64>>,
    pub theta: DMatrix<f64>,
    pub anchors: AnchorSet,
}

/// Object indices of the `m` largest entries of each column of `B`, ties to
/// the lower index.
pub fn top_objects(b: &DMatrix<f64>, m: usize) -> Vec<Vec<usize>> {
    b.column_iter()
        .map(|col| {
            let mut order: Vec<usize> = (0..col.len()).collect();
            order.sort_by(|&x, &y| col[y].total_cmp(&col[x]).then(x.cmp(&y)));
            order.truncate(m);
            order
        })
        .collect()
}

/// One line per topic with its top `m` labels separated by spaces.
pub fn write_top_words(path: &Path, b: &DMatrix<f64>, labels: &[String], m: usize) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for top in top_objects(b, m) {
        let words: Vec<&str> = top.iter().map(|&i| labels.get(i).map(String::as_str).unwrap_or("?")).collect();
        writeln!(w, "{}", words.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
