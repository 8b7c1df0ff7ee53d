//! Compressed dense retrieval.
//!
//! Compressors for embedding indexes (half precision, 8-bit scalar, PCA,
//! product quantization, sign hashing), exhaustive search over each
//! representation, trainers for learning-to-hash objectives, data builders
//! for domain adaptation, and retrieval metrics with an efficiency harness.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the serving precision.

pub mod adapt;
pub mod binhash;
pub mod compress;
pub mod data;
pub mod error;
pub mod eval;
pub mod index;
pub mod scalar;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type EmbeddingMatrixF32 = data::EmbeddingMatrix<f32>;
pub type EmbeddingMatrixF64 = data::EmbeddingMatrix<f64>;
pub type PqCodebookF32 = compress::PqCodebook<f32>;
pub type PqCodebookF64 = compress::PqCodebook<f64>;
pub type PcaModelF32 = compress::PcaModel<f32>;
pub type PcaModelF64 = compress::PcaModel<f64>;
pub type QueryHeadF32 = train::QueryHead<f32>;
pub type QueryHeadF64 = train::QueryHead<f64>;
pub type TrainablesF32 = train::Trainables<f32>;
pub type TrainablesF64 = train::Trainables<f64>;
