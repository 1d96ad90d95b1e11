//! Rectification of an empirical co-occurrence matrix.
//!
//! The target set is the intersection of the rank-`K` PSD matrices, the
//! matrices with entry sum one, and the entrywise non-negative matrices.
//! [`rectify_ap`] cycles through the three projections; [`rectify_dc`]
//! changes only the diagonal.

mod diagonal;
pub mod eigen;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use diagonal::{rectify_dc, DcOutcome};
pub use eigen::{truncated_eig, EigenConfig, EigenSolver, TruncatedEigen};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RectifyMethod {
    None,
    Ap,
    Dc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectifyConfig {
    pub k: usize,
    pub method: RectifyMethod,
    pub ap_iterations: usize,
    /// Stop AP once the movement between iterates drops below this.
    pub early_stop: Option<f64>,
    pub eig: EigenConfig,
    pub dc_max_iterations: usize,
    pub dc_tolerance: f64,
}

impl RectifyConfig {
    pub fn new(k: usize, method: RectifyMethod) -> Self {
        RectifyConfig {
            k,
            method,
            ap_iterations: 150,
            early_stop: None,
            eig: EigenConfig::default(),
            dc_max_iterations: 100,
            dc_tolerance: 1e-10,
        }
    }

    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        if self.k < 1 || self.k >= n {
            return Err(Error::InvalidArgument(format!("K = {} must satisfy 1 ≤ K < N = {n}", self.k)));
        }
        if self.ap_iterations < 1 {
            return Err(Error::InvalidArgument("AP needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Per-iteration movement `‖C⁽ᵗ⁾ − C⁽ᵗ⁻¹⁾‖_F` of an AP run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub movements: Vec<f64>,
}

impl ConvergenceTrace {
    /// `movements[t] / movements[t−1]`; `None` where the denominator is zero.
    pub fn ratios(&self) -> Vec<Option<f64>> {
        self.movements
            .windows(2)
            .map(|w| (w[0] > 0.0).then(|| w[1] / w[0]))
            .collect()
    }

    /// CSV with header `iteration,movement,ratio`; iterations are 1-based and
    /// the first row has an empty ratio.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "iteration,movement,ratio").map_err(io)?;
        let ratios = self.ratios();
        for (t, m) in self.movements.iter().enumerate() {
            let ratio = match t.checked_sub(1).and_then(|p| ratios[p]) {
                Some(r) => format!("{r:e}"),
                None => String::new(),
            };
            writeln!(w, "{},{m:e},{ratio}", t + 1).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut movements = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let field = line.split(',').nth(1).ok_or_else(|| Error::parse(path, i + 1, "missing movement"))?;
            movements.push(
                field
                    .parse()
                    .map_err(|_| Error::parse(path, i + 1, format!("bad movement {field:?}")))?,
            );
        }
        Ok(ConvergenceTrace { movements })
    }
}

/// Keeps the `K` largest positive eigenvalues: `U Λ_K⁺ Uᵀ`.
pub fn project_psd_k(c: &DMatrix<f64>, k: usize, cfg: &EigenConfig) -> Result<DMatrix<f64>> {
    let n = c.nrows();
    let eig = truncated_eig(c, k.min(n), cfg)?;
    let positive: Vec<usize> = (0..eig.values.len()).filter(|&i| eig.values[i] > 0.0).collect();
    let mut scaled = DMatrix::zeros(n, positive.len());
    for (dst, &i) in positive.iter().enumerate() {
        scaled.set_column(dst, &(eig.vectors.column(i) * eig.values[i].sqrt()));
    }
    let mut out = &scaled * scaled.transpose();
    eigen::symmetrize(&mut out);
    Ok(out)
}

/// Shifts every entry by the same constant so the entries sum to one.
pub fn project_nor(c: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = c.clone();
    project_nor_in_place(&mut out);
    out
}

pub fn project_nor_in_place(c: &mut DMatrix<f64>) {
    let n = c.nrows() * c.ncols();
    if n == 0 {
        return;
    }
    let shift = (1.0 - c.sum()) / n as f64;
    c.iter_mut().for_each(|v| *v += shift);
}

/// Clips negative entries to zero.
pub fn project_nn(c: &DMatrix<f64>) -> DMatrix<f64> {
    c.map(|v| v.max(0.0))
}

pub fn project_nn_in_place(c: &mut DMatrix<f64>) {
    c.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Alternating projection PSD_K → NOR → NN for `cfg.ap_iterations` rounds.
pub fn rectify_ap(c: &DMatrix<f64>, cfg: &RectifyConfig) -> Result<(DMatrix<f64>, ConvergenceTrace)> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch("rectification needs a square matrix".into()));
    }
    cfg.validate(c.nrows())?;
    let mut x = c.clone();
    let mut trace = ConvergenceTrace::default();
    for _ in 0..cfg.ap_iterations {
        let mut next = project_psd_k(&x, cfg.k, &cfg.eig)?;
        project_nor_in_place(&mut next);
        project_nn_in_place(&mut next);
        let movement = (&next - &x).norm();
        trace.movements.push(movement);
        x = next;
        if cfg.early_stop.is_some_and(|eps| movement < eps) {
            break;
        }
    }
    Ok((x, trace))
}
