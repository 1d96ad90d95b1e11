//! Planted models and synthetic corpora with known ground truth.
//!
//! Every random draw flows from a single `u64` seed. Document `m` uses its own
//! ChaCha stream (`seed`, stream `m`), so corpora are identical regardless of
//! how sampling is scheduled across threads.

use std::path::Path;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::matio;
use crate::rectify::eigen::symmetrize;

/// Draws from `Dirichlet(alpha)` through normalized Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let gammas: Vec<Gamma<f64>> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive Dirichlet parameter"))
        .collect();
    loop {
        let mut x: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        let s: f64 = x.iter().sum();
        // tiny concentrations can underflow every component; redraw
        if s > 0.0 && s.is_finite() {
            x.iter_mut().for_each(|v| *v /= s);
            return x;
        }
    }
}

/// `E[W Wᵀ]` for `W ~ Dirichlet(α)`: `(diag(α) + ααᵀ) / (α₀ (α₀ + 1))`.
pub fn dirichlet_second_moment(alpha: &[f64]) -> DMatrix<f64> {
    let k = alpha.len();
    let a0: f64 = alpha.iter().sum();
    let denom = a0 * (a0 + 1.0);
    DMatrix::from_fn(k, k, |i, j| {
        let diag = if i == j { alpha[i] } else { 0.0 };
        (diag + alpha[i] * alpha[j]) / denom
    })
}

/// Shape of the planted object-cluster matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub n: usize,
    pub k: usize,
    /// Probability each cluster puts on its own anchor object.
    pub anchor_weight: f64,
    /// Dirichlet concentration per non-anchor object (before the Zipf tilt).
    pub concentration: f64,
    /// Exponent of the Zipf base measure over non-anchor objects; 0 is uniform.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl PlantedConfig {
    pub fn new(n: usize, k: usize, anchor_weight: f64, seed: u64) -> Self {
        PlantedConfig {
            n,
            k,
            anchor_weight,
            concentration: 0.1,
            zipf_exponent: 0.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTopics {
    /// Column-stochastic `N × K`.
    pub b: DMatrix<f64>,
    /// Sorted anchor objects; `anchors[k]` is the anchor of cluster `k`.
    pub anchors: Vec<usize>,
}

pub fn generate_planted(n: usize, k: usize, anchor_weight: f64, seed: u64) -> Result<PlantedTopics> {
    generate_planted_with(&PlantedConfig::new(n, k, anchor_weight, seed))
}

pub fn generate_planted_with(cfg: &PlantedConfig) -> Result<PlantedTopics> {
    let (n, k) = (cfg.n, cfg.k);
    if k < 1 || n < k {
        return Err(Error::InvalidArgument(format!("need N ≥ K ≥ 1, got N = {n}, K = {k}")));
    }
    if !(cfg.anchor_weight > 0.0 && cfg.anchor_weight <= 1.0) {
        return Err(Error::InvalidArgument(format!("anchor weight {} outside (0, 1]", cfg.anchor_weight)));
    }
    if !(cfg.concentration > 0.0) {
        return Err(Error::InvalidArgument("concentration must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut anchors = sample(&mut rng, n, k).into_vec();
    anchors.sort_unstable();
    let mut is_anchor = vec![false; n];
    for &a in &anchors {
        is_anchor[a] = true;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| !is_anchor[i]).collect();

    let mut b = DMatrix::zeros(n, k);
    if rest.is_empty() {
        for (j, &a) in anchors.iter().enumerate() {
            b[(a, j)] = 1.0;
        }
        return Ok(PlantedTopics { b, anchors });
    }
    // Zipf base measure over non-anchor objects in a seeded random rank order
    let ranks = sample(&mut rng, rest.len(), rest.len()).into_vec();
    let weights: Vec<f64> = ranks.iter().map(|&r| ((r + 1) as f64).powf(-cfg.zipf_exponent)).collect();
    let total: f64 = weights.iter().sum();
    let params: Vec<f64> = weights
        .iter()
        .map(|w| (cfg.concentration * rest.len() as f64 * w / total).max(1e-6))
        .collect();
    for (j, &a) in anchors.iter().enumerate() {
        b[(a, j)] = cfg.anchor_weight;
        let draw = sample_dirichlet(&params, &mut rng);
        for (&i, v) in rest.iter().zip(draw) {
            b[(i, j)] = (1.0 - cfg.anchor_weight) * v;
        }
        let s = b.column(j).sum();
        b.column_mut(j).iter_mut().for_each(|v| *v /= s);
    }
    Ok(PlantedTopics { b, anchors })
}

/// How many tokens each synthetic document gets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DocLengthLaw {
    Constant(u64),
    /// `min + Poisson(mean − min)`.
    ShiftedPoisson { min: u64, mean: f64 },
    /// Exactly these lengths, one per document.
    PerDocument(Vec<u64>),
}

impl DocLengthLaw {
    fn draw<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> u64 {
        match self {
            DocLengthLaw::Constant(n) => *n,
            DocLengthLaw::ShiftedPoisson { min, mean } => {
                let lambda = mean - *min as f64;
                if lambda > 0.0 {
                    *min + Poisson::new(lambda).expect("positive rate").sample(rng) as u64
                } else {
                    *min
                }
            }
            DocLengthLaw::PerDocument(lengths) => lengths[m],
        }
    }
}

/// Planted ground truth for a sampled corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel {
    pub b_true: DMatrix<f64>,
    pub alpha: Vec<f64>,
    pub anchors_true: Vec<usize>,
    /// Per-document cluster proportions, `K × M`.
    pub w: DMatrix<f64>,
    /// `(1/M) Σ_m W_m W_mᵀ`.
    pub a_m_star: DMatrix<f64>,
    /// `E[W Wᵀ]`.
    pub a_star: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct PlantedHeader {
    alpha: Vec<f64>,
    anchors: Vec<usize>,
}

impl PlantedModel {
    /// `planted.json` plus `b_true.bin`, `w.bin`, `a_m_star.bin`, `a_star.bin`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header = PlantedHeader {
            alpha: self.alpha.clone(),
            anchors: self.anchors_true.clone(),
        };
        let path = dir.join("planted.json");
        let text = serde_json::to_string_pretty(&header).expect("header serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        matio::write_matrix(&dir.join("b_true.bin"), &self.b_true)?;
        matio::write_matrix(&dir.join("w.bin"), &self.w)?;
        matio::write_matrix(&dir.join("a_m_star.bin"), &self.a_m_star)?;
        matio::write_matrix(&dir.join("a_star.bin"), &self.a_star)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("planted.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let header: PlantedHeader =
            serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.line(), e.to_string()))?;
        Ok(PlantedModel {
            b_true: matio::read_matrix(&dir.join("b_true.bin"))?,
            alpha: header.alpha,
            anchors_true: header.anchors,
            w: matio::read_matrix(&dir.join("w.bin"))?,
            a_m_star: matio::read_matrix(&dir.join("a_m_star.bin"))?,
            a_star: matio::read_matrix(&dir.join("a_star.bin"))?,
        })
    }

    /// `C* = B A_M* Bᵀ`.
    pub fn posterior(&self) -> DMatrix<f64> {
        exact_posterior(&self.b_true, &self.a_m_star)
    }
}

#[derive(Debug, Clone)]
pub struct SampledCorpus {
    pub corpus: Corpus,
    pub w: DMatrix<f64>,
    pub a_m_star: DMatrix<f64>,
}

fn doc_rng(seed: u64, m: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m as u64);
    rng
}

/// Draws `W_m ~ Dir(α)`, `n_m` from the length law and
/// `H_m ~ Multi(n_m, B W_m)` for every document.
pub fn sample_corpus(
    b: &DMatrix<f64>,
    alpha: &[f64],
    m: usize,
    lengths: &DocLengthLaw,
    seed: u64,
) -> Result<SampledCorpus> {
    let (n, k) = b.shape();
    if alpha.len() != k {
        return Err(Error::DimensionMismatch(format!("α has {} entries for K = {k}", alpha.len())));
    }
    if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidArgument("α must be positive".into()));
    }
    if let DocLengthLaw::PerDocument(l) = lengths {
        if l.len() != m {
            return Err(Error::DimensionMismatch(format!("{} lengths for {m} documents", l.len())));
        }
    }
    let draws: Vec<(Vec<f64>, Document)> = (0..m)
        .into_par_iter()
        .map(|doc| {
            let mut rng = doc_rng(seed, doc);
            let w = sample_dirichlet(alpha, &mut rng);
            let len = lengths.draw(doc, &mut rng);
            let p: Vec<f64> = (0..n).map(|i| (0..k).map(|j| b[(i, j)] * w[j]).sum::<f64>().max(0.0)).collect();
            let mut h = vec![0u32; n];
            if len > 0 {
                let dist = WeightedIndex::new(&p).expect("topic mixture has positive mass");
                for _ in 0..len {
                    h[dist.sample(&mut rng)] += 1;
                }
            }
            (w, Document::from_dense(&h))
        })
        .collect();
    let mut w = DMatrix::zeros(k, m);
    let mut docs = Vec::with_capacity(m);
    for (j, (wm, doc)) in draws.into_iter().enumerate() {
        w.set_column(j, &nalgebra::DVector::from_vec(wm));
        docs.push(doc);
    }
    let mut a_m_star = if m > 0 { &w * w.transpose() / m as f64 } else { DMatrix::zeros(k, k) };
    symmetrize(&mut a_m_star);
    Ok(SampledCorpus {
        corpus: Corpus::with_generated_labels(docs, n)?,
        w,
        a_m_star,
    })
}

/// Planted model plus sampled corpus in one call.
pub fn planted_corpus(
    topics: &PlantedTopics,
    alpha: &[f64],
    m: usize,
    lengths: &DocLengthLaw,
    seed: u64,
) -> Result<(Corpus, PlantedModel)> {
    let s = sample_corpus(&topics.b, alpha, m, lengths, seed)?;
    let model = PlantedModel {
        b_true: topics.b.clone(),
        alpha: alpha.to_vec(),
        anchors_true: topics.anchors.clone(),
        w: s.w,
        a_m_star: s.a_m_star,
        a_star: dirichlet_second_moment(alpha),
    };
    Ok((s.corpus, model))
}

/// `C* = B A Bᵀ`, symmetrized.
pub fn exact_posterior(b: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = b * a * b.transpose();
    symmetrize(&mut c);
    c
}

/// Forces separability on a learned `B`: each column's largest remaining row
/// becomes its anchor, other columns lose their mass there, columns are
/// renormalized. Returns the adjusted matrix and the anchors.
pub fn plant_anchors(b: &DMatrix<f64>) -> Result<PlantedTopics> {
    let (n, k) = b.shape();
    if n < k {
        return Err(Error::InvalidArgument(format!("cannot plant {k} anchors among {n} objects")));
    }
    let mut out = b.map(|v| v.max(0.0));
    let mut used = vec![false; n];
    let mut anchors = Vec::with_capacity(k);
    for j in 0..k {
        let mut best = None;
        for i in 0..n {
            if !used[i] && best.is_none_or(|b: usize| out[(i, j)] > out[(b, j)]) {
                best = Some(i);
            }
        }
        let s = best.expect("n ≥ k leaves a row");
        used[s] = true;
        anchors.push(s);
        for l in 0..k {
            if l != j {
                out[(s, l)] = 0.0;
            }
        }
    }
    for (j, &s) in anchors.iter().enumerate() {
        if out[(s, j)] <= 0.0 {
            out[(s, j)] = 1.0 / n as f64;
        }
        let total = out.column(j).sum();
        out.column_mut(j).iter_mut().for_each(|v| *v /= total);
    }
    Ok(PlantedTopics { b: out, anchors })
}

/// Regenerates a corpus from a previously learned `B`: anchors are planted if
/// absent and every document keeps its original length.
pub fn semi_synthetic(corpus: &Corpus, b_learned: &DMatrix<f64>, alpha: &[f64], seed: u64) -> Result<(Corpus, PlantedModel)> {
    if b_learned.nrows() != corpus.vocab_size() {
        return Err(Error::DimensionMismatch(format!(
            "B has {} rows but the corpus vocabulary has {}",
            b_learned.nrows(),
            corpus.vocab_size()
        )));
    }
    let topics = plant_anchors(b_learned)?;
    let lengths = DocLengthLaw::PerDocument(corpus.documents().iter().map(Document::len).collect());
    let (regenerated, model) = planted_corpus(&topics, alpha, corpus.num_documents(), &lengths, seed)?;
    let relabelled = Corpus::new(regenerated.documents().to_vec(), corpus.vocabulary().to_vec())?;
    Ok((relabelled, model))
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method).
/// `result[r]` is the column assigned to row `r`.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square cost matrix");
    // potentials u (rows), v (columns); 1-based with a virtual column 0
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if !used[col] {
                    let cur = cost[(r0 - 1, col - 1)] - u[r0] - v[col];
                    if cur < minv[col] {
                        minv[col] = cur;
                        way[col] = col0;
                    }
                    if minv[col] < delta {
                        delta = minv[col];
                        col1 = col;
                    }
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for col in 1..=n {
        if owner[col] > 0 {
            result[owner[col] - 1] = col - 1;
        }
    }
    result
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMatching {
    /// `estimated[k]` is the estimated column matched to true column `k`.
    pub estimated: Vec<usize>,
    /// ℓ₁ distance of each matched pair.
    pub l1: Vec<f64>,
}

/// Matches estimated columns to true columns minimizing total ℓ₁ distance.
pub fn match_columns(b_est: &DMatrix<f64>, b_true: &DMatrix<f64>) -> Result<ColumnMatching> {
    if b_est.shape() != b_true.shape() {
        return Err(Error::DimensionMismatch(format!(
            "estimated B is {:?}, true B is {:?}",
            b_est.shape(),
            b_true.shape()
        )));
    }
    let k = b_true.ncols();
    let cost = DMatrix::from_fn(k, k, |t, e| (b_true.column(t) - b_est.column(e)).abs().sum());
    let estimated = min_cost_assignment(&cost);
    let l1 = estimated.iter().enumerate().map(|(t, &e)| cost[(t, e)]).collect();
    Ok(ColumnMatching { estimated, l1 })
}
