use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkernel::Matrix;
use crate::scalar::Scalar;

/// Features plus clean and observed (noisy) labels, split into train and test.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Matrix<f64>,
    clean_labels: Vec<usize>,
    noisy_labels: Vec<usize>,
    train: Vec<usize>,
    test: Vec<usize>,
    num_classes: usize,
}

fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    match labels.iter().find(|&&y| y >= k) {
        Some(&y) => Err(Error::LabelOutOfRange {
            label: y,
            num_classes: k,
        }),
        None => Ok(()),
    }
}

impl LabeledDataset {
    /// Noisy labels start out equal to the clean ones.
    pub fn new(
        features: Matrix<f64>,
        clean_labels: Vec<usize>,
        train: Vec<usize>,
        test: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if features.rows() != clean_labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.rows(),
                clean_labels.len()
            )));
        }
        check_labels(&clean_labels, num_classes)?;
        let n = clean_labels.len();
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&test) {
            if i >= n {
                return Err(Error::invalid(format!("split index {i} out of range ({n} examples)")));
            }
            if seen[i] {
                return Err(Error::invalid(format!("example {i} appears twice in the splits")));
            }
            seen[i] = true;
        }
        Ok(LabeledDataset {
            features,
            noisy_labels: clean_labels.clone(),
            clean_labels,
            train,
            test,
            num_classes,
        })
    }

    pub fn features(&self) -> &Matrix<f64> {
        &self.features
    }

    pub fn clean_labels(&self) -> &[usize] {
        &self.clean_labels
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Replaces the observed labels (all examples, train and test).
    pub fn with_noisy_labels(mut self, noisy: Vec<usize>) -> Result<Self> {
        if noisy.len() != self.clean_labels.len() {
            return Err(Error::invalid(format!(
                "{} noisy labels for {} examples",
                noisy.len(),
                self.clean_labels.len()
            )));
        }
        check_labels(&noisy, self.num_classes)?;
        self.noisy_labels = noisy;
        Ok(self)
    }

    /// Copy whose observed labels are the clean ones.
    pub fn with_clean_labels(&self) -> Self {
        LabeledDataset {
            noisy_labels: self.clean_labels.clone(),
            ..self.clone()
        }
    }

    pub fn train_features<T: Scalar>(&self) -> Matrix<T> {
        self.features.select_rows(&self.train).cast()
    }

    pub fn test_features<T: Scalar>(&self) -> Matrix<T> {
        self.features.select_rows(&self.test).cast()
    }

    /// Observed labels of the training split, in split order.
    pub fn train_noisy_labels(&self) -> Vec<usize> {
        self.train.iter().map(|&i| self.noisy_labels[i]).collect()
    }

    pub fn train_clean_labels(&self) -> Vec<usize> {
        self.train.iter().map(|&i| self.clean_labels[i]).collect()
    }

    /// Ground-truth labels of the test split; evaluation only ever reads these.
    pub fn test_clean_labels(&self) -> Vec<usize> {
        self.test.iter().map(|&i| self.clean_labels[i]).collect()
    }

    /// Fraction of training examples whose observed label differs from the clean one.
    pub fn train_flip_rate(&self) -> f64 {
        if self.train.is_empty() {
            return 0.0;
        }
        let flips = self
            .train
            .iter()
            .filter(|&&i| self.noisy_labels[i] != self.clean_labels[i])
            .count();
        flips as f64 / self.train.len() as f64
    }
}

/// One-hot rows: `n × k` with a single 1 per row.
pub fn one_hot<T: Scalar>(labels: &[usize], k: usize) -> Result<Matrix<T>> {
    check_labels(labels, k)?;
    let mut m = Matrix::zeros(labels.len(), k);
    for (i, &y) in labels.iter().enumerate() {
        m[(i, y)] = T::one();
    }
    Ok(m)
}

/// Writes `id,split,y_clean,y_noisy,f0..f{d-1}`, one row per example in split order.
pub fn write_dataset_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut header = String::from("id,split,y_clean,y_noisy");
    for j in 0..ds.dim() {
        header.push_str(&format!(",f{j}"));
    }
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for (split, indices) in [("train", &ds.train), ("test", &ds.test)] {
        for &i in indices {
            write!(w, "{i},{split},{},{}", ds.clean_labels[i], ds.noisy_labels[i]).map_err(io)?;
            for v in ds.features.row(i) {
                write!(w, ",{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        LabeledDataset::new(x, vec![0, 1, 2, 0], vec![0, 1], vec![2, 3], 3).unwrap()
    }

    #[test]
    fn one_hot_basic() {
        let m: Matrix<f64> = one_hot(&[0, 2], 3).unwrap();
        assert_eq!(m, Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap());
    }

    #[test]
    fn one_hot_empty_and_range() {
        let m: Matrix<f64> = one_hot(&[], 4).unwrap();
        assert_eq!(m.shape(), (0, 4));
        assert!(one_hot::<f64>(&[3], 3).is_err());
    }

    #[test]
    fn overlapping_splits_rejected() {
        let x = Matrix::<f64>::zeros(3, 1);
        assert!(LabeledDataset::new(x, vec![0, 1, 0], vec![0, 1], vec![1, 2], 2).is_err());
    }

    #[test]
    fn label_range_enforced() {
        let x = Matrix::<f64>::zeros(2, 1);
        assert!(LabeledDataset::new(x, vec![0, 2], vec![0], vec![1], 2).is_err());
        assert!(tiny().with_noisy_labels(vec![0, 0, 0, 5]).is_err());
    }

    #[test]
    fn split_views() {
        let ds = tiny().with_noisy_labels(vec![1, 1, 0, 0]).unwrap();
        assert_eq!(ds.train_noisy_labels(), vec![1, 1]);
        assert_eq!(ds.test_clean_labels(), vec![2, 0]);
        assert_eq!(ds.train_flip_rate(), 0.5);
        assert_eq!(ds.test_features::<f64>().row(1), &[3.0]);
    }

    #[test]
    fn csv_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset_csv(&tiny(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "id,split,y_clean,y_noisy,f0");
        assert_eq!(lines[1], "0,train,0,0,0");
        assert_eq!(lines[4], "3,test,0,0,3");
    }
}
