//! End-to-end factorization: rectify, select anchors, recover `B` and `A`,
//! evaluate against the unrectified statistics.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::anchors::{select_anchors, AnchorSet};
use crate::cooccur::{build_cooccurrence, row_normalize};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::recover::{self, EgConfig, TopicModel, DEFAULT_EPS_D};
use crate::rectify::{rectify_ap, rectify_dc, ConvergenceTrace, RectifyConfig, RectifyMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Dc,
    Ap,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Baseline, Method::Dc, Method::Ap];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Dc => "dc",
            Method::Ap => "ap",
        }
    }

    fn rectify_method(self) -> RectifyMethod {
        match self {
            Method::Baseline => RectifyMethod::None,
            Method::Dc => RectifyMethod::Dc,
            Method::Ap => RectifyMethod::Ap,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "none" => Ok(Method::Baseline),
            "dc" => Ok(Method::Dc),
            "ap" => Ok(Method::Ap),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?} (expected baseline, dc or ap)"
            ))),
        }
    }
}

/// Which estimator produces the cluster-cluster matrix `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ARoute {
    /// `D⁻¹ C_SS D⁻¹` from the anchor block.
    Anchor,
    /// `B⁺ C (Bᵀ)⁺`.
    Lsq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub method: Method,
    /// `rectify.k` is the number of clusters; `rectify.method` is ignored.
    pub rectify: RectifyConfig,
    pub eg: EgConfig,
    pub a_route: ARoute,
    pub eps_d: f64,
    /// Rescale the anchor-route `A` to unit mass. The raw estimate sums to one
    /// only when every row of `C̄` lies in the anchors' convex hull.
    pub normalize_a: bool,
    /// List length for dissimilarity and coherence.
    pub top_m: usize,
    pub coherence_epsilon: f64,
}

impl PipelineOptions {
    pub fn new(k: usize, method: Method) -> Self {
        PipelineOptions {
            method,
            rectify: RectifyConfig::new(k, method.rectify_method()),
            eg: EgConfig::default(),
            a_route: ARoute::Anchor,
            eps_d: DEFAULT_EPS_D,
            normalize_a: true,
            top_m: 20,
            coherence_epsilon: 1.0,
        }
    }

    pub fn k(&self) -> usize {
        self.rectify.k
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub method: Method,
    /// The statistics the factorization was evaluated against.
    pub original: DMatrix<f64>,
    pub rectified: DMatrix<f64>,
    /// AP only.
    pub trace: Option<ConvergenceTrace>,
    /// Marginal of the rectified matrix.
    pub p_x: DVector<f64>,
    pub model: TopicModel,
    /// Rows whose simplex solve stopped before the KKT tolerance.
    pub unconverged_rows: Vec<usize>,
    pub metrics: MetricsReport,
}

/// Produces the rectified matrix (and AP trace) for `method`.
pub fn rectify(c: &DMatrix<f64>, method: Method, cfg: &RectifyConfig) -> Result<(DMatrix<f64>, Option<ConvergenceTrace>)> {
    let cfg = RectifyConfig {
        method: method.rectify_method(),
        ..cfg.clone()
    };
    match method {
        Method::Baseline => {
            cfg.validate(c.nrows())?;
            Ok((c.clone(), None))
        }
        Method::Ap => {
            let (m, trace) = rectify_ap(c, &cfg)?;
            Ok((m, Some(trace)))
        }
        Method::Dc => Ok((rectify_dc(c, &cfg)?.matrix, None)),
    }
}

/// Recovers `Θ`, `B` and `A` from a (possibly rectified) co-occurrence matrix.
pub fn factorize(c: &DMatrix<f64>, opts: &PipelineOptions) -> Result<(TopicModel, DVector<f64>, Vec<usize>)> {
    let normalized = row_normalize(c)?;
    let anchors = select_anchors(&normalized.cbar, opts.k())?;
    let fit = recover::recover_theta(&normalized.cbar, &anchors.indices, &opts.eg)?;
    let b = recover::recover_b(&fit.theta, &normalized.p_x)?;
    let a = match opts.a_route {
        ARoute::Anchor => recover::recover_a_anchor(c, &anchors.indices, &b, opts.eps_d).map(|mut a| {
            let mass = a.sum();
            log::debug!("anchor-route A has mass {mass}");
            if opts.normalize_a && mass > 0.0 {
                a /= mass;
            }
            a
        }),
        ARoute::Lsq => recover::recover_a_lsq(c, &b),
    };
    let a = match a {
        Ok(a) => Some(a),
        Err(e @ (Error::VanishingAnchor(_) | Error::RankDeficientB(_))) => {
            log::warn!("cluster-cluster matrix unavailable: {e}");
            None
        }
        Err(e) => return Err(e),
    };
    let model = TopicModel {
        b,
        a,
        theta: fit.theta,
        anchors,
    };
    Ok((model, normalized.p_x, fit.unconverged))
}

/// Scores a model against the original statistics. Coherence needs the corpus
/// and is NaN without it; approximation and dominancy are NaN when `A` is absent.
pub fn evaluate(
    original: &DMatrix<f64>,
    corpus: Option<&Corpus>,
    model: &TopicModel,
    method: Method,
    opts: &PipelineOptions,
) -> Result<MetricsReport> {
    let k = model.b.ncols();
    let base = row_normalize(original)?;
    let theta = recover::recover_theta(&base.cbar, &model.anchors.indices, &opts.eg)?.theta;
    let recovery = metrics::recovery_error(&base.cbar, &theta, &model.anchors.indices)?;
    let (approximation, dominancy) = match &model.a {
        Some(a) => (
            metrics::approximation_error(original, &model.b, a)?,
            metrics::dominancy(a),
        ),
        None => (f64::NAN, None),
    };
    let coherence = match corpus {
        Some(corpus) => metrics::coherence(&model.b, corpus, opts.top_m, opts.coherence_epsilon)?,
        None => f64::NAN,
    };
    Ok(MetricsReport {
        method: method.as_str().to_string(),
        k,
        n: original.nrows(),
        recovery,
        approximation,
        dominancy: dominancy.unwrap_or(f64::NAN),
        dominancy_defined: dominancy.is_some(),
        specificity: metrics::specificity(&model.b, &base.p_x)?,
        dissimilarity: metrics::dissimilarity(&model.b, opts.top_m),
        coherence,
    })
}

pub fn run_on_cooccurrence(c: &DMatrix<f64>, corpus: Option<&Corpus>, opts: &PipelineOptions) -> Result<PipelineOutput> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch("co-occurrence matrix must be square".into()));
    }
    if let Some(corpus) = corpus {
        if corpus.vocab_size() != c.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "corpus has {} objects but C is {}×{}",
                corpus.vocab_size(),
                c.nrows(),
                c.ncols()
            )));
        }
    }
    let (rectified, trace) = rectify(c, opts.method, &opts.rectify)?;
    let (model, p_x, unconverged_rows) = factorize(&rectified, opts)?;
    let metrics = evaluate(c, corpus, &model, opts.method, opts)?;
    Ok(PipelineOutput {
        method: opts.method,
        original: c.clone(),
        rectified,
        trace,
        p_x,
        model,
        unconverged_rows,
        metrics,
    })
}

pub fn run_on_corpus(corpus: &Corpus, opts: &PipelineOptions) -> Result<PipelineOutput> {
    let c = build_cooccurrence(corpus)?.into_matrix();
    run_on_cooccurrence(&c, Some(corpus), opts)
}

/// Convenience accessor for the selected anchors.
pub fn anchors_of(out: &PipelineOutput) -> &AnchorSet {
    &out.model.anchors
}
