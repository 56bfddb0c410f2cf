//! Hierarchical coarse/fine training for classification under label noise.
//!
//! A fine→coarse label mapping is applied to a classifier's softmax output and
//! the network is trained on a weighted sum of the coarse and fine
//! cross-entropies. The crate bundles the from-scratch classifier, noise
//! injection (uniform and confusion-derived), the paired evaluation protocol
//! (McNemar per epoch, windowed accuracies), and an experiment runner.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the `f64` and `f32` instantiations.

pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod hierarchy;
pub mod noise;
pub mod numkernel;
pub mod rng;
pub mod scalar;
pub mod trainer;

pub use datagen::{LabeledDataset, SyntheticSpec};
pub use error::{Error, Result};
pub use hierarchy::Hierarchy;
pub use noise::NoiseModel;
pub use numkernel::{LayerGrads, Matrix, MlpClassifier};
pub use scalar::Scalar;
pub use trainer::{AdamState, RunRecord, TrainConfig};

pub type MatrixF64 = Matrix<f64>;
pub type MatrixF32 = Matrix<f32>;
pub type MlpF64 = MlpClassifier<f64>;
pub type MlpF32 = MlpClassifier<f32>;
pub type LayerGradsF64 = LayerGrads<f64>;
pub type LayerGradsF32 = LayerGrads<f32>;
pub type AdamStateF64 = AdamState<f64>;
pub type AdamStateF32 = AdamState<f32>;
