//! Big-endian IDX files as distributed for MNIST.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numkernel::Matrix;

use super::LabeledDataset;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
const MNIST_CLASSES: usize = 10;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx(format!("file ends inside the header at byte {offset}")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::Idx(format!(
            "bad magic number {magic:#010x}, expected {expected:#010x}"
        )));
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    let body = &bytes[header..];
    if body.len() < len {
        return Err(Error::Idx(format!(
            "truncated payload: {} bytes, expected {len}",
            body.len()
        )));
    }
    if body.len() > len {
        return Err(Error::Idx(format!(
            "{} trailing bytes after the payload",
            body.len() - len
        )));
    }
    Ok(body)
}

/// Label file contents.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, n)?.to_vec())
}

/// Image file contents as `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let len = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Idx("image dimensions overflow".into()))?;
    Ok((n, rows, cols, payload(bytes, 16, len)?.to_vec()))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn to_examples(images: &[u8], labels: &[u8]) -> Result<(usize, usize, Matrix<f64>, Vec<usize>)> {
    let (n, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != n {
        return Err(Error::Idx(format!(
            "{n} images but {} labels",
            labels.len()
        )));
    }
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    if let Some(&bad) = labels.iter().find(|&&y| y >= MNIST_CLASSES) {
        return Err(Error::Idx(format!("label {bad} is not a digit")));
    }
    let d = rows * cols;
    let features = Matrix::from_vec(n, d, pixels.iter().map(|&b| f64::from(b) / 255.0).collect())?;
    Ok((n, d, features, labels))
}

/// One image/label file pair; every example lands in the training split.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let (n, _, features, labels) = to_examples(&read(images_path)?, &read(labels_path)?)?;
    LabeledDataset::new(features, labels, (0..n).collect(), Vec::new(), MNIST_CLASSES)
}

/// Standard train and test file pairs, concatenated with the matching splits.
pub fn load_mnist(
    train_images: &Path,
    train_labels: &Path,
    test_images: &Path,
    test_labels: &Path,
) -> Result<LabeledDataset> {
    let (n_train, d, train_x, mut labels) =
        to_examples(&read(train_images)?, &read(train_labels)?)?;
    let (n_test, d_test, test_x, test_y) = to_examples(&read(test_images)?, &read(test_labels)?)?;
    if d != d_test {
        return Err(Error::Idx(format!(
            "train images have {d} pixels, test images {d_test}"
        )));
    }
    let mut data = train_x.into_data();
    data.extend(test_x.into_data());
    labels.extend(test_y);
    let n = n_train + n_test;
    LabeledDataset::new(
        Matrix::from_vec(n, d, data)?,
        labels,
        (0..n_train).collect(),
        (n_train..n).collect(),
        MNIST_CLASSES,
    )
}
