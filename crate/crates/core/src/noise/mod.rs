//! Label-noise models: transition matrices, label corruption, and the
//! binary breakdown-point analysis.

pub mod breakdown;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::evaluation::confusion_matrix;
use crate::numkernel::Matrix;
use crate::rng::{Rng, Stream};
use crate::trainer::{predict, train_model, TrainConfig};

pub use breakdown::{
    identity_residuals, max_clean_risk, FitMethod, IdentityCheck,
    breakdown_experiment, noisy_posterior, BreakdownProblem, BreakdownRow, Direction,
    ThresholdClassifier,
};

const ROW_TOLERANCE: f64 = 1e-9;

/// Row-stochastic `K×K` matrix: entry `(i, j)` is the chance that an example of
/// class `i` is observed with label `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    transition: Matrix<f64>,
    ratio: f64,
}

impl NoiseModel {
    pub fn new(transition: Matrix<f64>, ratio: f64) -> Result<Self> {
        let (k, cols) = transition.shape();
        if k != cols || k < 2 {
            return Err(Error::invalid(format!(
                "transition matrix must be square with K >= 2, got {k}x{cols}"
            )));
        }
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::invalid(format!("noise ratio must lie in [0, 1), got {ratio}")));
        }
        for (i, row) in transition.row_iter().enumerate() {
            if row.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::invalid(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::invalid(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(NoiseModel { transition, ratio })
    }

    /// Infers the ratio as the mean off-diagonal mass over classes.
    pub fn from_transition(transition: Matrix<f64>) -> Result<Self> {
        let k = transition.rows().max(1);
        let diag: f64 = (0..transition.rows().min(transition.cols()))
            .map(|i| transition[(i, i)])
            .sum();
        let ratio = (1.0 - diag / k as f64).max(0.0);
        NoiseModel::new(transition, ratio)
    }

    pub fn transition(&self) -> &Matrix<f64> {
        &self.transition
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn num_classes(&self) -> usize {
        self.transition.rows()
    }

    /// Off-diagonal mass of row `i`, the flip probability for class `i`.
    pub fn flip_probability(&self, class: usize) -> f64 {
        1.0 - self.transition[(class, class)]
    }
}

/// Diagonal `1 − p`, every off-diagonal entry `p / (K − 1)`.
pub fn uniform_noise(k: usize, p: f64) -> Result<NoiseModel> {
    if k < 2 {
        return Err(Error::invalid(format!("uniform noise needs K >= 2, got {k}")));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("noise ratio must lie in [0, 1), got {p}")));
    }
    let off = p / (k - 1) as f64;
    let mut t = Matrix::filled(k, k, off);
    for i in 0..k {
        t[(i, i)] = 1.0 - p;
    }
    NoiseModel::new(t, p)
}

/// `T = (1 − p)·I + p·C`, where `C` is the confusion matrix with its diagonal
/// removed and each row renormalized. Rows without any confusion fall back to
/// the uniform off-diagonal distribution.
pub fn transition_from_confusion(confusion: &Matrix<f64>, p: f64) -> Result<NoiseModel> {
    let k = confusion.rows();
    if confusion.cols() != k || k < 2 {
        return Err(Error::invalid(format!(
            "confusion matrix must be square with K >= 2, got {:?}",
            confusion.shape()
        )));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("noise ratio must lie in [0, 1), got {p}")));
    }
    let mut t = Matrix::zeros(k, k);
    for i in 0..k {
        let off: f64 = (0..k).filter(|&j| j != i).map(|j| confusion[(i, j)]).sum();
        for j in 0..k {
            t[(i, j)] = if i == j {
                1.0 - p
            } else if off > 0.0 {
                p * confusion[(i, j)] / off
            } else {
                p / (k - 1) as f64
            };
        }
    }
    NoiseModel::new(t, p)
}

/// Flat proxy settings for the confusion-matrix construction: 30 epochs, default architecture.
pub fn default_proxy_config() -> TrainConfig {
    TrainConfig {
        alpha: 1.0,
        epochs: 30,
        hierarchy: None,
        ..TrainConfig::default()
    }
}

/// Test-split confusion counts of a FLAT proxy trained on the clean training labels.
pub fn proxy_confusion(dataset: &LabeledDataset, proxy: &TrainConfig) -> Result<Matrix<f64>> {
    let k = dataset.num_classes();
    let present = {
        let mut seen = vec![false; k];
        dataset.train_clean_labels().into_iter().for_each(|y| seen[y] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if k < 2 || present < 2 {
        return Err(Error::invalid("the proxy needs at least two classes in the training split"));
    }
    let cfg = TrainConfig {
        alpha: 1.0,
        hierarchy: None,
        ..proxy.clone()
    };
    let trained = train_model::<f64>(&dataset.with_clean_labels(), &cfg)?;
    let predictions = predict(&trained.model, &dataset.test_features())?;
    confusion_matrix(&dataset.test_clean_labels(), &predictions, k)
}

/// Class-dependent noise following a trained proxy's confusion pattern, at ratio `p`.
pub fn class_dependent_noise(
    dataset: &LabeledDataset,
    p: f64,
    proxy: &TrainConfig,
) -> Result<NoiseModel> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "class-dependent noise ratio must lie in (0, 1), got {p}"
        )));
    }
    transition_from_confusion(&proxy_confusion(dataset, proxy)?, p)
}

/// Independent draws `noisy[i] ~ T[clean[i], ·]`.
pub fn sample_noisy_labels(clean: &[usize], model: &NoiseModel, rng: &mut Rng) -> Result<Vec<usize>> {
    let k = model.num_classes();
    clean
        .iter()
        .map(|&y| {
            if y >= k {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    num_classes: k,
                });
            }
            Ok(rng.categorical(model.transition.row(y)))
        })
        .collect()
}

/// Corrupts the training split. Test labels stay clean.
pub fn corrupt_labels(dataset: &LabeledDataset, model: &NoiseModel, seed: u64) -> Result<LabeledDataset> {
    if dataset.num_classes() != model.num_classes() {
        return Err(Error::invalid(format!(
            "dataset has {} classes, noise model {}",
            dataset.num_classes(),
            model.num_classes()
        )));
    }
    let mut rng = Rng::for_stream(seed, Stream::Noise);
    let train = dataset.train_indices();
    let drawn = sample_noisy_labels(&dataset.train_clean_labels(), model, &mut rng)?;
    let mut noisy = dataset.clean_labels().to_vec();
    for (&i, y) in train.iter().zip(drawn) {
        noisy[i] = y;
    }
    dataset.clone().with_noisy_labels(noisy)
}

/// `K` lines of `K` comma-separated probabilities, no header.
pub fn write_transition_csv(model: &NoiseModel, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in model.transition.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a matrix written by [`write_transition_csv`] and validates it.
pub fn read_transition_csv(path: &Path) -> Result<NoiseModel> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad probability `{s}` in {}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    NoiseModel::from_transition(Matrix::from_rows(&rows)?)
}
