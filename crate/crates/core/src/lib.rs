//! Knowledge distillation for multi-label text classification.

// Validation uses `!(x > 0)` deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod distill;
pub mod error;
pub mod hypertune;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instantiations of the generic core types.
pub type Config = distill::DistillConfig<f64>;
pub type Mode = distill::TrainingMode<f64>;
pub type Setup = distill::DistillSetup<f64>;
pub type Features = corpus::FeatureMatrix<f64>;
pub type Model = model::ModelState<f64>;
pub type Predictions = distill::PredictionSet<f64>;
pub type Report = metrics::MetricsReport<f64>;
pub type Space = hypertune::HyperSpace<f64>;
pub type Swarm = hypertune::SwarmConfig<f64>;
