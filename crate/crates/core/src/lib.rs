//! Nested ("Matryoshka") sentence embeddings at desk scale.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//!
//! - [`textnorm`]: Arabic-aware normalization and hashed character n-gram features
//! - [`embedding`]: vectors, prefix truncation, similarity kernels, dimension ladders
//! - [`losses`]: softmax cross-entropy, MRL / MRL-E, in-batch ranking loss and the
//!   Matryoshka wrapper, all with analytic gradients
//! - [`encoder`]: a linear hashed-feature encoder, Adam training, triplet accuracy
//! - [`evaluator`]: Pearson / Spearman correlation reports per dimension and metric
//! - [`dataset`]: row types, score normalization, splits, synthetic data generators
//! - [`retrieval`]: exact k-NN and shortlist-then-rerank funnel search
//!
//! File formats, CSV ingestion, the HTTP service and the CLI live in the `nestemb`
//! companion crate.

#![no_std]
#![deny(rust_2018_idioms)]
// `!(x > 0.0)` style checks reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod embedding;
pub mod encoder;
mod error;
pub mod evaluator;
pub mod linalg;
pub mod losses;
pub mod retrieval;
pub mod textnorm;

pub use embedding::{DimensionLadder, EmbeddingVector, SimilarityMetric};
pub use encoder::{EncoderModel, TrainConfig, TrainReport};
pub use error::{Error, Result};
pub use evaluator::{CorrelationReport, Embedder};
pub use textnorm::{FeatureVector, FeaturizerConfig, NormalizedText};
