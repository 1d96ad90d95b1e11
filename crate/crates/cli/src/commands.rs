use std::path::{Path, PathBuf};

use jsmf::anchors::{export_embedding, select_anchors, AnchorSet};
use jsmf::cooccur::{build_cooccurrence, row_normalize, CoocMatrix};
use jsmf::corpus::{curate, load_uci, read_vocabulary, write_uci, Corpus, CurationConfig, CurationMap};
use jsmf::matio;
use jsmf::pipeline::{self, factorize, run_on_cooccurrence, Method, PipelineOutput};
use jsmf::recover::{write_top_words, TopicModel};
use jsmf::synth::{generate_planted_with, planted_corpus};
use jsmf::DMatrix;
use serde::Serialize;

use crate::config::Config;
use crate::CliError;

#[derive(Serialize)]
pub struct Manifest<'a, T: Serialize> {
    pub tool: &'static str,
    pub cli_version: &'static str,
    pub core_version: &'static str,
    pub command: &'a str,
    pub config_hash: String,
    pub config: &'a Config,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra: Option<T>,
}

/// Collects output files under the run directory.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| CliError::Io(p, e))
    }

    pub fn finish<T: Serialize>(mut self, command: &str, cfg: &Config, extra: Option<T>) -> Result<(), CliError> {
        let manifest = Manifest {
            tool: "jsmf",
            cli_version: env!("CARGO_PKG_VERSION"),
            core_version: jsmf::VERSION,
            command,
            config_hash: cfg.hash(),
            config: cfg,
            outputs: std::mem::take(&mut self.files),
            extra,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let p = self.dir.join("manifest.json");
        std::fs::write(&p, text + "\n").map_err(|e| CliError::Io(p, e))
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Config(format!("{what} is required")))
}

/// Loads the UCI corpus and curates it when a target vocabulary is set.
pub fn load_corpus(cfg: &Config) -> Result<(Corpus, Option<CurationMap>), CliError> {
    let docword = required(&cfg.input.docword, "input docword file (--docword)")?;
    let vocab = required(&cfg.input.vocab, "input vocabulary file (--vocab)")?;
    let corpus = load_uci(docword, vocab)?;
    let Some(target) = cfg.curation.target_vocab else {
        return Ok((corpus, None));
    };
    let mut cc = CurationConfig::new(target);
    if let Some(min) = cfg.curation.min_doc_length {
        cc.min_doc_length = min;
    }
    if let Some(stop) = &cfg.input.stopwords {
        cc.stopwords = read_vocabulary(stop)?.into_iter().collect();
    }
    let (curated, map) = curate(&corpus, &cc)?;
    log::info!(
        "curated {} × {} to {} × {}",
        corpus.num_documents(),
        corpus.vocab_size(),
        curated.num_documents(),
        curated.vocab_size()
    );
    Ok((curated, Some(map)))
}

pub fn load_cooc(cfg: &Config) -> Result<DMatrix<f64>, CliError> {
    let path = required(&cfg.input.cooc, "input co-occurrence file (--cooc)")?;
    Ok(CoocMatrix::read(path)?.into_matrix())
}

fn labels(cfg: &Config, n: usize) -> Result<Vec<String>, CliError> {
    match &cfg.input.vocab {
        Some(v) => {
            let labels = read_vocabulary(v)?;
            if labels.len() != n {
                return Err(CliError::Config(format!(
                    "{} has {} labels but the matrix has {n} rows",
                    v.display(),
                    labels.len()
                )));
            }
            Ok(labels)
        }
        None => Ok((0..n).map(|i| format!("w{i}")).collect()),
    }
}

/// The co-occurrence matrix and, when built from documents, the corpus.
fn statistics(cfg: &Config, out: &mut Outputs) -> Result<(DMatrix<f64>, Option<Corpus>), CliError> {
    if cfg.input.docword.is_some() {
        let (corpus, map) = load_corpus(cfg)?;
        if let Some(map) = map {
            map.write_json(&out.path("curation.json"))?;
            write_uci(&corpus, &out.path("docword.txt"), &out.path("vocab.txt"))?;
        }
        let c = build_cooccurrence(&corpus)?;
        c.write(&out.path("cooc.bin"))?;
        Ok((c.into_matrix(), Some(corpus)))
    } else {
        Ok((load_cooc(cfg)?, None))
    }
}

#[derive(Serialize)]
struct CorpusSummary {
    documents: usize,
    objects: usize,
    tokens: u64,
    mean_length: f64,
}

pub fn ingest(cfg: &Config) -> Result<(), CliError> {
    let (corpus, map) = load_corpus(cfg)?;
    let mut out = Outputs::new(&cfg.out)?;
    write_uci(&corpus, &out.path("docword.txt"), &out.path("vocab.txt"))?;
    if let Some(map) = map {
        map.write_json(&out.path("curation.json"))?;
    }
    let summary = CorpusSummary {
        documents: corpus.num_documents(),
        objects: corpus.vocab_size(),
        tokens: corpus.total_tokens(),
        mean_length: corpus.mean_length(),
    };
    out.write_text("corpus.json", &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))?;
    out.finish("ingest", cfg, Some(summary))
}

pub fn cooc(cfg: &Config) -> Result<(), CliError> {
    let (corpus, _) = load_corpus(cfg)?;
    let mut out = Outputs::new(&cfg.out)?;
    build_cooccurrence(&corpus)?.write(&out.path("cooc.bin"))?;
    out.finish::<()>("cooc", cfg, None)
}

pub fn rectify(cfg: &Config) -> Result<(), CliError> {
    let c = load_cooc(cfg)?;
    let k = cfg.k()?;
    let method = cfg.model.method;
    let opts = cfg.pipeline_options(k, method);
    let (rectified, trace) = pipeline::rectify(&c, method, &opts.rectify)?;
    let mut out = Outputs::new(&cfg.out)?;
    matio::write_cooc(&out.path("rectified.bin"), &rectified)?;
    if let Some(trace) = trace {
        trace.write_csv(&out.path("trace.csv"))?;
    }
    out.finish::<()>("rectify", cfg, None)
}

pub fn anchors(cfg: &Config) -> Result<(), CliError> {
    let c = load_cooc(cfg)?;
    let k = cfg.k()?;
    let labels = labels(cfg, c.nrows())?;
    let normalized = row_normalize(&c)?;
    let anchors = select_anchors(&normalized.cbar, k)?;
    let mut out = Outputs::new(&cfg.out)?;
    anchors.write_json(&out.path("anchors.json"), &labels)?;
    export_embedding(&normalized.cbar, &anchors, &labels, &out.path("embedding.csv"))?;
    out.finish::<()>("anchors", cfg, None)
}

fn write_model(out: &mut Outputs, model: &TopicModel, labels: &[String], top_words: usize) -> Result<(), CliError> {
    model.anchors.write_json(&out.path("anchors.json"), labels)?;
    matio::write_matrix(&out.path("B.bin"), &model.b)?;
    matio::write_matrix(&out.path("theta.bin"), &model.theta)?;
    if let Some(a) = &model.a {
        matio::write_matrix(&out.path("A.bin"), a)?;
        matio::write_csv(&out.path("A.csv"), a)?;
    }
    write_top_words(&out.path("topwords.txt"), &model.b, labels, top_words)?;
    Ok(())
}

pub fn topics(cfg: &Config) -> Result<(), CliError> {
    let c = load_cooc(cfg)?;
    let k = cfg.k()?;
    let labels = labels(cfg, c.nrows())?;
    let (model, _, unconverged) = factorize(&c, &cfg.pipeline_options(k, cfg.model.method))?;
    if !unconverged.is_empty() {
        log::warn!("{} rows stopped before the KKT tolerance", unconverged.len());
    }
    let mut out = Outputs::new(&cfg.out)?;
    write_model(&mut out, &model, &labels, cfg.metrics.top_words)?;
    out.finish::<()>("topics", cfg, None)
}

pub fn eval(cfg: &Config) -> Result<(), CliError> {
    let c = load_cooc(cfg)?;
    let dir = required(&cfg.input.model, "model directory (--model)")?;
    let b = matio::read_matrix(&dir.join("B.bin"))?;
    let a_path = dir.join("A.bin");
    let a = if a_path.exists() {
        Some(matio::read_matrix(&a_path)?)
    } else {
        None
    };
    let (anchors, _) = AnchorSet::read_json(&dir.join("anchors.json"))?;
    let corpus = match cfg.input.docword {
        Some(_) => Some(load_corpus(cfg)?.0),
        None => None,
    };
    let model = TopicModel {
        theta: DMatrix::zeros(0, b.ncols()),
        b,
        a,
        anchors,
    };
    let k = model.b.ncols();
    let report = pipeline::evaluate(&c, corpus.as_ref(), &model, cfg.model.method, &cfg.pipeline_options(k, cfg.model.method))?;
    let mut out = Outputs::new(&cfg.out)?;
    out.write_text("metrics.json", &(report.to_json() + "\n"))?;
    report.append_csv(&out.path("metrics.csv"))?;
    out.finish::<()>("eval", cfg, None)
}

pub fn synth(cfg: &Config) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let planted_cfg = cfg.planted(seed)?;
    let topics = generate_planted_with(&planted_cfg)?;
    let alpha = vec![cfg.synth.alpha; planted_cfg.k];
    // documents draw from a stream separate from the one that built B
    let (corpus, model) = planted_corpus(&topics, &alpha, cfg.synth.documents, &cfg.length_law(), seed.wrapping_add(1))?;
    let mut out = Outputs::new(&cfg.out)?;
    write_uci(&corpus, &out.path("docword.txt"), &out.path("vocab.txt"))?;
    let truth = out.path("truth");
    model.write(&truth)?;
    matio::write_cooc(&out.path("cooc_true.bin"), &model.posterior())?;
    out.finish::<()>("synth", cfg, None)
}

fn write_pipeline(out: &mut Outputs, cfg: &Config, result: &PipelineOutput, labels: &[String]) -> Result<(), CliError> {
    if result.method != Method::Baseline {
        matio::write_cooc(&out.path("rectified.bin"), &result.rectified)?;
    }
    if let Some(trace) = &result.trace {
        trace.write_csv(&out.path("trace.csv"))?;
    }
    write_model(out, &result.model, labels, cfg.metrics.top_words)?;
    let normalized = row_normalize(&result.rectified)?;
    export_embedding(&normalized.cbar, &result.model.anchors, labels, &out.path("embedding.csv"))?;
    out.write_text("metrics.json", &(result.metrics.to_json() + "\n"))?;
    let csv = out.path("metrics.csv");
    if csv.exists() {
        std::fs::remove_file(&csv).map_err(|e| CliError::Io(csv.clone(), e))?;
    }
    result.metrics.append_csv(&csv)?;
    Ok(())
}

#[derive(Serialize)]
struct PipelineSummary {
    unconverged_rows: usize,
    cluster_matrix: bool,
}

pub fn pipeline(cfg: &Config) -> Result<(), CliError> {
    let k = cfg.k()?;
    let mut out = Outputs::new(&cfg.out)?;
    let (c, corpus) = statistics(cfg, &mut out)?;
    let labels = match &corpus {
        Some(corpus) => corpus.vocabulary().to_vec(),
        None => labels(cfg, c.nrows())?,
    };
    let result = run_on_cooccurrence(&c, corpus.as_ref(), &cfg.pipeline_options(k, cfg.model.method))?;
    write_pipeline(&mut out, cfg, &result, &labels)?;
    let summary = PipelineSummary {
        unconverged_rows: result.unconverged_rows.len(),
        cluster_matrix: result.model.a.is_some(),
    };
    out.finish("pipeline", cfg, Some(summary))
}

/// Co-occurrence statistics shared by every sweep cell.
pub fn sweep_statistics(cfg: &Config, out: &mut Outputs) -> Result<(DMatrix<f64>, Option<Corpus>), CliError> {
    statistics(cfg, out)
}
