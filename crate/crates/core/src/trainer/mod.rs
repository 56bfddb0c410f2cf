//! Mini-batch training of FLAT and hierarchical (HC) classifiers.
//!
//! HC training applies the fine→coarse mapping to the softmax output, and
//! optimizes `(1 − α)·CE(coarse) + α·CE(fine)` with Adam. `α = 1` is the FLAT model.

mod adam;
mod config;
mod loss;
mod record;
mod train;

pub use crate::numkernel::MlpClassifier;
pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::TrainConfig;
pub use loss::{loss_and_gradients, weighted_loss, Objective, WeightedLoss};
pub use record::{fingerprint_labels, fingerprint_model, EpochStats, RunRecord};
pub use train::{init_model, predict, train, train_flat, train_model, Trained};
