use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numkernel::MlpClassifier;
use crate::scalar::Scalar;

use super::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub fine_loss: f64,
    pub coarse_loss: f64,
    /// Accuracy on the clean test labels.
    pub test_accuracy: f64,
}

/// Everything recorded about one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub config: TrainConfig,
    pub epochs: Vec<EpochStats>,
    /// Per epoch, per test example: was the prediction correct.
    #[serde(skip)]
    pub correctness: Vec<Vec<bool>>,
    /// SHA-256 of the initial parameters.
    pub init_fingerprint: String,
    /// SHA-256 of the observed training labels.
    pub label_fingerprint: String,
}

impl RunRecord {
    pub fn num_epochs(&self) -> usize {
        self.epochs.len()
    }

    pub fn test_accuracies(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.test_accuracy).collect()
    }

    /// `epoch,train_loss,fine_loss,coarse_loss,test_acc`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "fine_loss", "coarse_loss", "test_acc"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.fine_loss.to_string(),
                e.coarse_loss.to_string(),
                e.test_accuracy.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// One line per epoch; character `i` is `1` when test example `i` was classified correctly.
    pub fn write_bitmaps(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for bits in &self.correctness {
            let line: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_bitmaps(path: &Path) -> Result<Vec<Vec<bool>>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.lines()
            .map(|line| {
                line.chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(Error::invalid(format!("bad bitmap character {other:?}"))),
                    })
                    .collect()
            })
            .collect()
    }

    /// Config snapshot plus fingerprints, as pretty JSON.
    pub fn write_config_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn hex(digest: impl AsRef<[u8]>) -> String {
    digest.as_ref().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn fingerprint_model<T: Scalar>(model: &MlpClassifier<T>) -> String {
    let mut h = Sha256::new();
    for d in model.layer_dims() {
        h.update((d as u64).to_le_bytes());
    }
    for p in model.params() {
        h.update(p.as_f64().to_bits().to_le_bytes());
    }
    hex(h.finalize())
}

pub fn fingerprint_labels(labels: &[usize]) -> String {
    let mut h = Sha256::new();
    for &y in labels {
        h.update((y as u64).to_le_bytes());
    }
    hex(h.finalize())
}
