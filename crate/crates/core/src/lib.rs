//! Simulation core for test-time adaptation augmented with budgeted active
//! fine-tuning.
//!
//! The numeric core ([`model`]) is generic over the scalar type; the rest of
//! the pipeline runs in double precision through the aliases below.

pub mod adapter;
pub mod base;
pub mod controller;
pub mod error;
pub mod forge;
pub mod ledger;
pub mod matrix;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod scenario;
pub mod seed;
pub mod selector;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{ArchSpec, BatchPredictions, GradScope, Gradients, LabeledSet, Loss, Mlp, NormMode, TrainConfig};
pub use scalar::Scalar;

/// Double-precision classifier used throughout the pipeline.
pub type Model = Mlp<f64>;
pub type Predictions = BatchPredictions<f64>;
pub type Dataset = LabeledSet<f64>;
pub type Grads = Gradients<f64>;
pub type Mat = Matrix<f64>;
