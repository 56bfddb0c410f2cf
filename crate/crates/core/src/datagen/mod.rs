//! Datasets with a known fine/coarse label structure.

mod dataset;
mod idx;
mod synthetic;

pub use dataset::{one_hot, write_dataset_csv, LabeledDataset};
pub use idx::{load_mnist, load_mnist_idx, parse_idx_images, parse_idx_labels};
pub use synthetic::{generate_synthetic, SyntheticSpec};
