use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::ops::{column_sums, matmul, matmul_nt, matmul_tn};
use super::Matrix;

/// Fully connected layer computing `x · weights + biases`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer<T> {
    /// `fan_in × fan_out`.
    pub weights: Matrix<T>,
    pub biases: Vec<T>,
}

/// Feed-forward softmax classifier: ReLU on hidden layers, identity on the output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpClassifier<T> {
    layers: Vec<DenseLayer<T>>,
}

/// Activations retained by [`mlp_forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    layer_dims: Vec<usize>,
    /// Input to each layer: the batch itself, then every post-ReLU hidden activation.
    inputs: Vec<Matrix<T>>,
}

/// Parameter gradients, laid out exactly like the model's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads<T> {
    pub d_weights: Vec<Matrix<T>>,
    pub d_biases: Vec<Vec<T>>,
}

impl<T: Scalar> MlpClassifier<T> {
    /// All-zero model with the given layer widths `[input, hidden.., output]`.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| DenseLayer {
                weights: Matrix::zeros(w[0], w[1]),
                biases: vec![T::zero(); w[1]],
            })
            .collect();
        Ok(MlpClassifier { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a model needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.biases.len() != l.weights.cols() {
                return Err(Error::invalid(format!(
                    "layer {i}: {} biases for {} outputs",
                    l.biases.len(),
                    l.weights.cols()
                )));
            }
            if i > 0 && layers[i - 1].weights.cols() != l.weights.rows() {
                return Err(Error::invalid(format!(
                    "layer {i} expects {} inputs but the previous layer emits {}",
                    l.weights.rows(),
                    layers[i - 1].weights.cols()
                )));
            }
        }
        Ok(MlpClassifier { layers })
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].weights.rows()];
        dims.extend(self.layers.iter().map(|l| l.weights.cols()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.cols()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.biases.len())
            .sum()
    }

    /// Parameters in a fixed order: per layer, weights (row-major) then biases.
    pub fn params(&self) -> impl Iterator<Item = T> + '_ {
        self.layers.iter().flat_map(|l| {
            l.weights
                .data()
                .iter()
                .copied()
                .chain(l.biases.iter().copied())
        })
    }

    /// Mutable access to the parameter at `index` in [`Self::params`] order.
    pub fn param_mut(&mut self, mut index: usize) -> Option<&mut T> {
        for l in &mut self.layers {
            let nw = l.weights.data().len();
            if index < nw {
                return Some(&mut l.weights.data_mut()[index]);
            }
            index -= nw;
            if index < l.biases.len() {
                return Some(&mut l.biases[index]);
            }
            index -= l.biases.len();
        }
        None
    }

    /// Logits only, skipping the cache.
    pub fn logits(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        mlp_forward(self, x).map(|(logits, _)| logits)
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::invalid(
            "layer dims need at least an input and an output width",
        ));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::invalid(format!("zero-width layer in {dims:?}")));
    }
    Ok(())
}

impl<T: Scalar> LayerGrads<T> {
    pub fn zeros_like(model: &MlpClassifier<T>) -> Self {
        LayerGrads {
            d_weights: model
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.weights.rows(), l.weights.cols()))
                .collect(),
            d_biases: model
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.biases.len()])
                .collect(),
        }
    }

    /// Gradients in [`MlpClassifier::params`] order.
    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.d_weights
            .iter()
            .zip(&self.d_biases)
            .flat_map(|(w, b)| w.data().iter().copied().chain(b.iter().copied()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn matches(&self, model: &MlpClassifier<T>) -> bool {
        self.d_weights.len() == model.layers.len()
            && self
                .d_weights
                .iter()
                .zip(&self.d_biases)
                .zip(&model.layers)
                .all(|((w, b), l)| w.shape() == l.weights.shape() && b.len() == l.biases.len())
    }
}

/// Forward pass. Returns the logits and the activations needed by [`mlp_backward`].
pub fn mlp_forward<T: Scalar>(
    model: &MlpClassifier<T>,
    x: &Matrix<T>,
) -> Result<(Matrix<T>, ForwardCache<T>)> {
    if x.cols() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "mlp_forward",
            left: x.shape(),
            right: model.layers[0].weights.shape(),
        });
    }
    let last = model.layers.len() - 1;
    let mut inputs = Vec::with_capacity(model.layers.len());
    let mut current = x.clone();
    for (i, layer) in model.layers.iter().enumerate() {
        let mut z = matmul(&current, &layer.weights)?;
        for r in 0..z.rows() {
            for (v, &b) in z.row_mut(r).iter_mut().zip(&layer.biases) {
                *v += b;
            }
        }
        if i < last {
            for v in z.data_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        inputs.push(std::mem::replace(&mut current, z));
    }
    let cache = ForwardCache {
        layer_dims: model.layer_dims(),
        inputs,
    };
    Ok((current, cache))
}

/// Backward pass: parameter gradients for an upstream gradient `d_logits` (∂loss/∂logits).
pub fn mlp_backward<T: Scalar>(
    model: &MlpClassifier<T>,
    cache: &ForwardCache<T>,
    d_logits: &Matrix<T>,
) -> Result<LayerGrads<T>> {
    if cache.layer_dims != model.layer_dims() {
        return Err(Error::StaleCache(format!(
            "cache built for {:?}, model is {:?}",
            cache.layer_dims,
            model.layer_dims()
        )));
    }
    let batch = cache.inputs[0].rows();
    if d_logits.shape() != (batch, model.output_dim()) {
        return Err(Error::StaleCache(format!(
            "upstream gradient is {:?}, expected ({batch}, {})",
            d_logits.shape(),
            model.output_dim()
        )));
    }
    let n = model.layers.len();
    let mut d_weights = Vec::with_capacity(n);
    let mut d_biases = Vec::with_capacity(n);
    let mut delta = d_logits.clone();
    for l in (0..n).rev() {
        let input = &cache.inputs[l];
        d_weights.push(matmul_tn(input, &delta)?);
        d_biases.push(column_sums(&delta));
        if l > 0 {
            let mut upstream = matmul_nt(&delta, &model.layers[l].weights)?;
            // ReLU mask: post-activation is positive exactly where the pre-activation was.
            for (g, &a) in upstream.data_mut().iter_mut().zip(input.data()) {
                if a <= T::zero() {
                    *g = T::zero();
                }
            }
            delta = upstream;
        }
    }
    d_weights.reverse();
    d_biases.reverse();
    Ok(LayerGrads {
        d_weights,
        d_biases,
    })
}
