//! Crisis detection for short posts, with extractive explanation spans.
//!
//! Two detectors (a bidirectional GRU with attention and a unigram logistic
//! regression) feed three seed functions (coefficients, attention weights and
//! a deletion-based local surrogate). Seeds are turned into a contiguous span
//! by walking the dependency tree of the sentence that holds most of them.

pub mod checkpoint;
pub mod corpus;
pub mod depparse;
pub mod embed;
pub mod eval;
pub mod explain;
pub mod hash;
pub mod lime;
pub mod linalg;
pub mod linear;
pub mod nn;
pub mod scalar;
pub mod seeds;

pub use scalar::Scalar;

/// The attention detector at working precision.
pub type AttentionModel = nn::AttentionModel<f64>;
pub type AttentionModelF32 = nn::AttentionModel<f32>;
pub type Tensor = nn::Tensor<f64>;
pub type GruParams = nn::GruParams<f64>;
pub type EmbeddingTable = embed::EmbeddingTable<f64>;
