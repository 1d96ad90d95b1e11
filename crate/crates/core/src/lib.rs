//! Joint stochastic matrix factorization with rectified anchor words.
//!
//! The pipeline estimates an object co-occurrence matrix `C` from count data,
//! optionally rectifies it toward the set of low-rank, doubly non-negative,
//! joint-stochastic matrices, then factors it as `C ≈ B A Bᵀ` using anchor
//! (basis) objects selected by pivoted QR.
//!
//! Modules follow the data flow:
//!
//! * [`corpus`] loads and curates bag-of-words data.
//! * [`cooccur`] builds the unbiased co-occurrence estimator.
//! * [`rectify`] projects `C` by alternating projection or diagonal completion.
//! * [`anchors`] selects basis objects and exports 2D embeddings.
//! * [`recover`] infers `Θ`, `B` and `A`.
//! * [`metrics`] evaluates a factorization against the original `C`.
//! * [`synth`] generates planted models and corpora with known ground truth.
//! * [`pipeline`] wires the stages together.

pub mod anchors;
pub mod cooccur;
pub mod corpus;
pub mod error;
pub mod matio;
pub mod metrics;
pub mod pipeline;
pub mod recover;
pub mod rectify;
pub mod synth;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use nalgebra::{DMatrix, DVector};
