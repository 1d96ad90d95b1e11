use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("curation failed: {0}")]
    Curation(String),

    #[error("no admissible documents: every document has fewer than two tokens")]
    NoAdmissibleDocuments,

    #[error("eigensolver did not converge after {restarts} restarts (residual norms {residuals:?})")]
    EigenNonConvergence { restarts: usize, residuals: Vec<f64> },

    #[error("effective rank below K: found {found} of {requested} anchors before residuals vanished")]
    RankDeficient { found: usize, requested: usize },

    #[error("cluster {0} received no probability")]
    EmptyCluster(usize),

    #[error("anchor {0} has vanishing topic probability")]
    VanishingAnchor(usize),

    #[error("object-cluster matrix is rank deficient (smallest singular value {0:e})")]
    RankDeficientB(f64),

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error("top word {0} has zero document frequency")]
    ZeroDocumentFrequency(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for failures caused by files or configuration rather than numerics.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Parse { .. } | Error::Format(_) | Error::InvalidArgument(_)
        )
    }
}
