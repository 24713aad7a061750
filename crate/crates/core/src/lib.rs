//! Graph-based code recommendation for open-source developers.
//!
//! The engine ingests user–file–repository interactions, builds per-repository
//! file-structure graphs, and trains a model that fuses code-segment features
//! with each file's historical contributors, aggregates over the project
//! hierarchy with graph attention, and propagates over file-level and
//! project-level interaction graphs. Evaluation covers intra-project,
//! cross-project and cold-start ranking.
//!
//! All numeric code is generic over [`Scalar`]; training uses `f32` and
//! gradient verification uses `f64`. The aliases below name the common
//! instantiations.

pub mod autodiff;
pub mod behavior;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod recommend;
pub mod scalar;
pub mod semantics;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tensor64 = autodiff::Tensor<f64>;
pub type Sparse32 = autodiff::SparseMatrix<f32>;
pub type Sparse64 = autodiff::SparseMatrix<f64>;
pub type CoderModel32 = model::CoderModel<f32>;
pub type CoderModel64 = model::CoderModel<f64>;
pub type BaselineModel32 = model::BaselineModel<f32>;
pub type BaselineModel64 = model::BaselineModel<f64>;
pub type Embeddings32 = model::Embeddings<f32>;
