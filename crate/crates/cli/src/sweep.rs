//! Resumable grid over (method, K). Each cell stores its result in
//! `cells/<method>-k<K>.json`; a rerun with the same configuration skips
//! every cell already on disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use jsmf::cooccur::row_normalize;
use jsmf::metrics::{MetricsReport, CSV_HEADER};
use jsmf::pipeline::{run_on_cooccurrence, Method};
use jsmf::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commands::{sweep_statistics, Outputs};
use crate::config::Config;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    /// Completed, but the cluster-cluster matrix was unavailable.
    Flagged,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub k: usize,
    pub config_hash: String,
    pub status: CellStatus,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

fn cell_path(dir: &Path, method: Method, k: usize) -> PathBuf {
    dir.join(format!("{method}-k{k}.json"))
}

fn load_cell(path: &Path, hash: &str) -> Option<CellResult> {
    let text = std::fs::read_to_string(path).ok()?;
    let cell: CellResult = serde_json::from_str(&text).ok()?;
    (cell.config_hash == hash).then_some(cell)
}

fn run_cell(cfg: &Config, c: &DMatrix<f64>, corpus: Option<&jsmf::corpus::Corpus>, method: Method, k: usize, hash: &str) -> CellResult {
    let outcome = run_on_cooccurrence(c, corpus, &cfg.pipeline_options(k, method));
    match outcome {
        Ok(out) => CellResult {
            method,
            k,
            config_hash: hash.to_string(),
            status: if out.model.a.is_some() && out.metrics.dominancy_defined {
                CellStatus::Ok
            } else {
                CellStatus::Flagged
            },
            metrics: Some(out.metrics),
            error: None,
        },
        Err(e) => CellResult {
            method,
            k,
            config_hash: hash.to_string(),
            status: CellStatus::Failed,
            metrics: None,
            error: Some(e.to_string()),
        },
    }
}

fn csv_line(cell: &CellResult) -> String {
    let status = match cell.status {
        CellStatus::Ok => "ok",
        CellStatus::Flagged => "flagged",
        CellStatus::Failed => "failed",
    };
    match &cell.metrics {
        Some(m) => format!("{},{status}", m.csv_row()),
        None => format!("{},{},NaN,NaN,NaN,NaN,NaN,NaN,{status}", cell.method, cell.k),
    }
}

#[derive(Serialize)]
struct SweepRecord {
    completed: Vec<String>,
    failed: Vec<String>,
    flagged: Vec<String>,
}

pub fn sweep(cfg: &Config) -> Result<(), CliError> {
    if cfg.sweep.ks.is_empty() || cfg.sweep.methods.is_empty() {
        return Err(CliError::Config("sweep needs at least one K and one method".into()));
    }
    let mut out = Outputs::new(&cfg.out)?;
    let (c, corpus) = sweep_statistics(cfg, &mut out)?;
    // fail fast on statistics no cell could use
    row_normalize(&c)?;
    let cells_dir = cfg.out.join("cells");
    std::fs::create_dir_all(&cells_dir).map_err(|e| CliError::Io(cells_dir.clone(), e))?;
    let hash = cfg.hash();

    let mut grid: Vec<(Method, usize)> = cfg
        .sweep
        .methods
        .iter()
        .flat_map(|&m| cfg.sweep.ks.iter().map(move |&k| (m, k)))
        .collect();
    grid.sort_unstable();
    grid.dedup();

    let results: Mutex<BTreeMap<(Method, usize), CellResult>> = Mutex::new(BTreeMap::new());
    let pending: Vec<(Method, usize)> = grid
        .iter()
        .copied()
        .filter(|&(m, k)| match load_cell(&cell_path(&cells_dir, m, k), &hash) {
            Some(cell) => {
                log::info!("cell {m} K={k} already complete");
                results.lock().expect("no poisoned lock").insert((m, k), cell);
                false
            }
            None => true,
        })
        .collect();

    let write_error: Mutex<Option<CliError>> = Mutex::new(None);
    pending.par_iter().for_each(|&(method, k)| {
        let cell = run_cell(cfg, &c, corpus.as_ref(), method, k, &hash);
        if let Some(e) = &cell.error {
            log::warn!("cell {method} K={k} failed: {e}");
        }
        let path = cell_path(&cells_dir, method, k);
        let text = serde_json::to_string_pretty(&cell).expect("cell serializes") + "\n";
        if let Err(e) = std::fs::write(&path, text) {
            write_error.lock().expect("no poisoned lock").get_or_insert(CliError::Io(path, e));
        }
        results.lock().expect("no poisoned lock").insert((method, k), cell);
    });
    if let Some(e) = write_error.into_inner().expect("no poisoned lock") {
        return Err(e);
    }

    let results = results.into_inner().expect("no poisoned lock");
    let mut csv = format!("{CSV_HEADER},status\n");
    let mut record = SweepRecord {
        completed: Vec::new(),
        failed: Vec::new(),
        flagged: Vec::new(),
    };
    for ((method, k), cell) in &results {
        csv.push_str(&csv_line(cell));
        csv.push('\n');
        let name = format!("{method}-k{k}");
        match cell.status {
            CellStatus::Failed => record.failed.push(name),
            CellStatus::Flagged => {
                record.flagged.push(name.clone());
                record.completed.push(name);
            }
            CellStatus::Ok => record.completed.push(name),
        }
    }
    out.write_text("sweep.csv", &csv)?;
    out.finish("sweep", cfg, Some(record))
}
