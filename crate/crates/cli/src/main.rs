//! `jsmf` command-line driver.
//!
//! Exit codes: 0 success, 1 computation error, 2 I/O or configuration error.

mod commands;
mod config;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jsmf::pipeline::Method;

use crate::config::{Config, Overrides};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(PathBuf, std::io::Error),
    Core(jsmf::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<jsmf::Error> for CliError {
    fn from(e: jsmf::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(..) => 2,
            CliError::Core(e) if e.is_io() => 2,
            CliError::Core(_) => 1,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    method: Option<Method>,
    /// Number of clusters.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// UCI docword file.
    #[arg(long, global = true)]
    docword: Option<PathBuf>,
    /// UCI vocabulary file.
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
    /// Binary co-occurrence matrix.
    #[arg(long, global = true)]
    cooc: Option<PathBuf>,
    /// Directory with a fitted model (B.bin, A.bin, anchors.json).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a UCI corpus, curate it, and write the result.
    Ingest,
    /// Build the co-occurrence matrix of a corpus.
    Cooc,
    /// Rectify a co-occurrence matrix.
    Rectify,
    /// Select anchor objects and export a 2D embedding.
    Anchors,
    /// Recover B, A and Θ from a co-occurrence matrix.
    Topics,
    /// Score a fitted model against a co-occurrence matrix.
    Eval,
    /// Generate a planted model and sample a corpus from it.
    Synth,
    /// Run every stage end to end.
    Pipeline,
    /// Run the pipeline over a grid of methods and K.
    Sweep {
        /// Comma-separated K values.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
}

#[derive(Debug, Parser)]
#[command(name = "jsmf", version, about = "Rectified anchor-word joint stochastic matrix factorization")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let c = cli.common;
    let overrides = Overrides {
        method: c.method,
        k: c.k,
        seed: c.seed,
        out: c.out,
        threads: c.threads,
        docword: c.docword,
        vocab: c.vocab,
        cooc: c.cooc,
        model: c.model,
    };
    let mut cfg = Config::load(c.config.as_deref(), &overrides)?;
    if let Command::Sweep { ks, methods } = &cli.command {
        if let Some(ks) = ks {
            cfg.sweep.ks.clone_from(ks);
        }
        if let Some(methods) = methods {
            cfg.sweep.methods.clone_from(methods);
        }
    }
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Cooc => commands::cooc(&cfg),
        Command::Rectify => commands::rectify(&cfg),
        Command::Anchors => commands::anchors(&cfg),
        Command::Topics => commands::topics(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Synth => commands::synth(&cfg),
        Command::Pipeline => commands::pipeline(&cfg),
        Command::Sweep { .. } => sweep::sweep(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
