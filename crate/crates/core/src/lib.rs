//! Curriculum data selection under a fixed annotation budget.
//!
//! The pipeline partitions an unlabeled pool into skill clusters ([`cluster`]), spends part
//! of the budget on a warmup set, and then repeatedly samples clusters in proportion to a
//! temperature softmax over their recent learning progress ([`engine`]). [`sim`] closes the
//! loop with a synthetic learner so the dynamics can be exercised without a real model, and
//! [`analysis`] holds the benchmark rarity, ability and difficulty tools.

pub mod analysis;
pub mod cluster;
pub mod data;
pub mod engine;
pub mod error;
pub mod scalar;
pub mod seeds;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Embeddings as stored on disk.
pub type Embeddings = data::EmbeddingMatrix<f32>;
/// Embeddings in double precision, for analysis.
pub type Embeddings64 = data::EmbeddingMatrix<f64>;
pub type ClusterModelF32 = cluster::ClusterModel<f32>;
pub type ClusterModelF64 = cluster::ClusterModel<f64>;
pub type Snapshot = engine::MetricSnapshot<f64>;
pub type Deltas = engine::DeltaVector<f64>;
pub type Distribution = engine::SamplingDistribution<f64>;
pub type GaussianModelF64 = analysis::GaussianModel<f64>;
