//! Run configuration: a TOML file with sections, overridden by flags.

use std::path::{Path, PathBuf};

use jsmf::pipeline::{ARoute, Method, PipelineOptions};
use jsmf::recover::{EgConfig, DEFAULT_EPS_D};
use jsmf::rectify::{EigenConfig, RectifyConfig};
use jsmf::synth::{DocLengthLaw, PlantedConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// UCI `docword` file.
    pub docword: Option<PathBuf>,
    /// UCI vocabulary, one label per line.
    pub vocab: Option<PathBuf>,
    /// Binary co-occurrence matrix.
    pub cooc: Option<PathBuf>,
    /// Directory holding `B.bin`, `A.bin` and `anchors.json`.
    pub model: Option<PathBuf>,
    /// One stopword per line.
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub k: Option<usize>,
    pub method: Method,
    pub seed: Option<u64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            k: None,
            method: Method::Ap,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationSection {
    /// Curate to this many objects; absent means the corpus is used as is.
    pub target_vocab: Option<usize>,
    pub min_doc_length: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectifySection {
    pub ap_iterations: usize,
    pub early_stop: Option<f64>,
    pub dc_max_iterations: usize,
    pub dc_tolerance: f64,
    pub eig: EigenConfig,
}

impl Default for RectifySection {
    fn default() -> Self {
        let r = RectifyConfig::new(1, jsmf::rectify::RectifyMethod::Ap);
        RectifySection {
            ap_iterations: r.ap_iterations,
            early_stop: r.early_stop,
            dc_max_iterations: r.dc_max_iterations,
            dc_tolerance: r.dc_tolerance,
            eig: r.eig,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub top_m: usize,
    pub coherence_epsilon: f64,
    pub a_route: ARoute,
    pub normalize_a: bool,
    pub eps_d: f64,
    /// Top-word report length.
    pub top_words: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            top_m: 20,
            coherence_epsilon: 1.0,
            a_route: ARoute::Anchor,
            normalize_a: true,
            eps_d: DEFAULT_EPS_D,
            top_words: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n: usize,
    pub k: Option<usize>,
    pub anchor_weight: f64,
    pub concentration: f64,
    pub zipf_exponent: f64,
    /// Symmetric Dirichlet parameter for document proportions.
    pub alpha: f64,
    pub documents: usize,
    pub min_length: u64,
    pub mean_length: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n: 500,
            k: None,
            anchor_weight: 0.05,
            concentration: 0.1,
            zipf_exponent: 0.0,
            alpha: 0.1,
            documents: 2000,
            min_length: 10,
            mean_length: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub ks: Vec<usize>,
    pub methods: Vec<Method>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            ks: vec![5, 10, 15, 20, 25],
            methods: vec![Method::Baseline, Method::Dc, Method::Ap],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub input: InputConfig,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub model: ModelConfig,
    pub curation: CurationSection,
    pub rectify: RectifySection,
    pub eg: EgConfig,
    pub metrics: MetricsSection,
    pub synth: SynthSection,
    pub sweep: SweepSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            input: InputConfig::default(),
            out: PathBuf::from("out"),
            threads: None,
            model: ModelConfig::default(),
            curation: CurationSection::default(),
            rectify: RectifySection::default(),
            eg: EgConfig::default(),
            metrics: MetricsSection::default(),
            synth: SynthSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub docword: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub cooc: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

impl Config {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Config, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Config::default(),
        };
        if let Some(m) = overrides.method {
            cfg.model.method = m;
        }
        if let Some(k) = overrides.k {
            cfg.model.k = Some(k);
        }
        if let Some(s) = overrides.seed {
            cfg.model.seed = Some(s);
        }
        if let Some(o) = &overrides.out {
            cfg.out = o.clone();
        }
        if let Some(t) = overrides.threads {
            cfg.threads = Some(t);
        }
        let input = &mut cfg.input;
        for (slot, value) in [
            (&mut input.docword, &overrides.docword),
            (&mut input.vocab, &overrides.vocab),
            (&mut input.cooc, &overrides.cooc),
            (&mut input.model, &overrides.model),
        ] {
            if value.is_some() {
                slot.clone_from(value);
            }
        }
        Ok(cfg)
    }

    pub fn k(&self) -> Result<usize, CliError> {
        self.model.k.ok_or_else(|| CliError::Config("K is required (--k or [model] k)".into()))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.model
            .seed
            .ok_or_else(|| CliError::Config("a seed is required (--seed or [model] seed)".into()))
    }

    pub fn pipeline_options(&self, k: usize, method: Method) -> PipelineOptions {
        let mut opts = PipelineOptions::new(k, method);
        opts.rectify.ap_iterations = self.rectify.ap_iterations;
        opts.rectify.early_stop = self.rectify.early_stop;
        opts.rectify.dc_max_iterations = self.rectify.dc_max_iterations;
        opts.rectify.dc_tolerance = self.rectify.dc_tolerance;
        opts.rectify.eig = self.rectify.eig.clone();
        opts.eg = self.eg.clone();
        opts.a_route = self.metrics.a_route;
        opts.eps_d = self.metrics.eps_d;
        opts.normalize_a = self.metrics.normalize_a;
        opts.top_m = self.metrics.top_m;
        opts.coherence_epsilon = self.metrics.coherence_epsilon;
        opts
    }

    pub fn planted(&self, seed: u64) -> Result<PlantedConfig, CliError> {
        let k = self.synth.k.or(self.model.k).ok_or_else(|| CliError::Config("synth needs K".into()))?;
        Ok(PlantedConfig {
            n: self.synth.n,
            k,
            anchor_weight: self.synth.anchor_weight,
            concentration: self.synth.concentration,
            zipf_exponent: self.synth.zipf_exponent,
            seed,
        })
    }

    pub fn length_law(&self) -> DocLengthLaw {
        DocLengthLaw::ShiftedPoisson {
            min: self.synth.min_length,
            mean: self.synth.mean_length,
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "out = \"a\"\n[model]\nk = 5\nmethod = \"dc\"\nseed = 3\n[eg]\nstep_size = 10.0\n").unwrap();
        let cfg = Config::load(Some(&path), &Overrides::default()).unwrap();
        assert_eq!(cfg.model.k, Some(5));
        assert_eq!(cfg.model.method, Method::Dc);
        assert_eq!(cfg.eg.step_size, 10.0);
        assert_eq!(cfg.eg.max_iterations, 500);
        let o = Overrides {
            k: Some(7),
            method: Some(Method::Ap),
            out: Some("b".into()),
            ..Overrides::default()
        };
        let cfg = Config::load(Some(&path), &o).unwrap();
        assert_eq!(cfg.model.k, Some(7));
        assert_eq!(cfg.model.method, Method::Ap);
        assert_eq!(cfg.out, PathBuf::from("b"));
        assert_eq!(cfg.model.seed, Some(3));
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = Config::default();
        cfg.model.k = Some(4);
        cfg.rectify.early_stop = Some(1e-9);
        cfg.sweep.ks = vec![2, 3];
        let text = toml::to_string(&cfg).unwrap();
        let back: Config = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("[model]\nkk = 3\n").is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = Config::default();
        let mut b = Config::default();
        b.metrics.top_m = 7;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
