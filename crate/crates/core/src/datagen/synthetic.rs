use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::numkernel::Matrix;
use crate::rng::{Rng, Stream};

use super::LabeledDataset;

/// Hierarchical Gaussian mixture: well-separated coarse groups, each holding
/// closer-together fine classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_coarse: usize,
    pub fine_per_coarse: usize,
    pub dim: usize,
    /// Distance between any two coarse-group centers.
    pub coarse_separation: f64,
    /// Distance between any two fine-class centers of the same group.
    pub fine_separation: f64,
    /// Isotropic within-class standard deviation.
    pub noise_std: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// The reference task: 4 groups of 2 classes in 20 dimensions.
    fn default() -> Self {
        SyntheticSpec {
            num_coarse: 4,
            fine_per_coarse: 2,
            dim: 20,
            coarse_separation: 6.0,
            fine_separation: 2.0,
            noise_std: 1.0,
            n_train: 8000,
            n_test: 2000,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn num_classes(&self) -> usize {
        self.num_coarse * self.fine_per_coarse
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_coarse == 0 || self.fine_per_coarse == 0 || self.num_classes() < 2 {
            return Err(Error::invalid(format!(
                "need at least two fine classes, got {}x{}",
                self.num_coarse, self.fine_per_coarse
            )));
        }
        if !(self.fine_separation > 0.0 && self.coarse_separation > self.fine_separation) {
            return Err(Error::invalid(format!(
                "need coarse_separation > fine_separation > 0, got {} and {}",
                self.coarse_separation, self.fine_separation
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if self.dim < self.num_coarse.max(self.fine_per_coarse) {
            return Err(Error::invalid(format!(
                "dim {} cannot hold {} mutually orthogonal directions",
                self.dim,
                self.num_coarse.max(self.fine_per_coarse)
            )));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::invalid("both splits need at least one example"));
        }
        Ok(())
    }
}

/// `count` random orthonormal vectors in `dim` dimensions (Gram–Schmidt on Gaussians).
fn orthonormal(count: usize, dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Class centers, indexed by fine class.
fn class_centers(spec: &SyntheticSpec, rng: &mut Rng) -> Vec<Vec<f64>> {
    // Orthonormal directions scaled by s/√2 are pairwise exactly s apart.
    let coarse_scale = spec.coarse_separation / std::f64::consts::SQRT_2;
    let fine_scale = spec.fine_separation / std::f64::consts::SQRT_2;
    let coarse: Vec<Vec<f64>> = orthonormal(spec.num_coarse, spec.dim, rng)
        .into_iter()
        .map(|v| v.into_iter().map(|x| x * coarse_scale).collect())
        .collect();
    let mut centers = Vec::with_capacity(spec.num_classes());
    for group in &coarse {
        if spec.fine_per_coarse == 1 {
            centers.push(group.clone());
            continue;
        }
        for dir in orthonormal(spec.fine_per_coarse, spec.dim, rng) {
            centers.push(group.iter().zip(&dir).map(|(c, u)| c + fine_scale * u).collect());
        }
    }
    centers
}

/// Samples a balanced dataset and returns it together with its planted hierarchy.
///
/// Fine class `c` belongs to coarse group `c / fine_per_coarse`. Example `i`
/// of each split has class `i % K`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(LabeledDataset, Hierarchy)> {
    spec.validate()?;
    let mut rng = Rng::for_stream(spec.seed, Stream::Data);
    let k = spec.num_classes();
    let centers = class_centers(spec, &mut rng);
    let n = spec.n_train + spec.n_test;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let within = if i < spec.n_train { i } else { i - spec.n_train };
        let y = within % k;
        labels.push(y);
        for &c in &centers[y] {
            data.push(c + spec.noise_std * rng.normal());
        }
    }
    let features = Matrix::from_vec(n, spec.dim, data)?;
    let ds = LabeledDataset::new(
        features,
        labels,
        (0..spec.n_train).collect(),
        (spec.n_train..n).collect(),
        k,
    )?;
    let hierarchy = Hierarchy::contiguous(spec.num_coarse, spec.fine_per_coarse)?;
    Ok((ds, hierarchy))
}
