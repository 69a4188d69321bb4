//! Robust asymmetric loss (RAL) laboratory for long-tailed multi-label
//! classification.
//!
//! - [`loss`]: BCE, focal, ASL, APL and RAL with analytic gradients.
//! - [`metrics`]: AP / ROC AUC / F1, macro means, imbalance ratio.
//! - [`synthdata`]: seeded long-tailed dataset generator, noise, CSV I/O.
//! - [`trainer`]: linear / one-hidden-layer models trained with Adam.
//! - [`experiments`]: loss comparison, ablation, sweeps, noise robustness.

pub mod experiments;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod synthdata;
pub mod trainer;

pub use loss::{batch_loss, elementwise_loss, sigmoid, LossConfig, LossKind, LossOutput};
pub use matrix::Matrix;
pub use metrics::{evaluate, ClassCounts, LabelMode, MetricReport};
pub use synthdata::{generate, Dataset, DatasetSpec, NoiseKind, NoiseSpec};
pub use trainer::{train, ModelParams, TrainConfig, TrainHistory};
