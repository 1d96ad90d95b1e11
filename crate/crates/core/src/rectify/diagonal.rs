use nalgebra::DMatrix;

use super::{project_psd_k, RectifyConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DcOutcome {
    pub matrix: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest diagonal change in the final iteration.
    pub last_change: f64,
}

/// Diagonal completion: replaces the diagonal by the fixed point of
/// `d ← max(0, diag(Π_PSD_K(C with diagonal d)))`, then shifts the diagonal
/// uniformly so the entries sum to one. Off-diagonal entries are untouched.
pub fn rectify_dc(c: &DMatrix<f64>, cfg: &RectifyConfig) -> Result<DcOutcome> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch("rectification needs a square matrix".into()));
    }
    let n = c.nrows();
    cfg.validate(n)?;
    let mut x = c.clone();
    let mut iterations = 0;
    let mut converged = cfg.dc_max_iterations == 0;
    let mut last_change = 0.0;
    while iterations < cfg.dc_max_iterations {
        let p = project_psd_k(&x, cfg.k, &cfg.eig)?;
        iterations += 1;
        last_change = 0.0f64;
        for i in 0..n {
            let d = p[(i, i)].max(0.0);
            last_change = last_change.max((d - x[(i, i)]).abs());
            x[(i, i)] = d;
        }
        if last_change < cfg.dc_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "diagonal completion stopped after {iterations} iterations (last change {last_change:e})"
        );
    }
    let shift = (1.0 - x.sum()) / n as f64;
    for i in 0..n {
        x[(i, i)] = (x[(i, i)] + shift).max(0.0);
    }
    Ok(DcOutcome {
        matrix: x,
        iterations,
        converged,
        last_change,
    })
}
