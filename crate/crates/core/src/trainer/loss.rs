use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::numkernel::{
    cross_entropy, mlp_backward, mlp_forward, softmax_rows, LayerGrads, Matrix, MlpClassifier,
    PROB_FLOOR,
};
use crate::scalar::Scalar;

/// Loss value with its two components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedLoss<T> {
    pub total: T,
    pub fine: T,
    pub coarse: T,
}

/// `(1 − α)·CE(coarse) + α·CE(fine)` on probability and one-hot matrices.
pub fn weighted_loss<T: Scalar>(
    fine_probs: &Matrix<T>,
    fine_onehot: &Matrix<T>,
    coarse_probs: &Matrix<T>,
    coarse_onehot: &Matrix<T>,
    alpha: T,
) -> Result<WeightedLoss<T>> {
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if fine_probs.rows() != coarse_probs.rows() {
        return Err(Error::ShapeMismatch {
            op: "weighted_loss",
            left: fine_probs.shape(),
            right: coarse_probs.shape(),
        });
    }
    let fine = cross_entropy(fine_probs, fine_onehot)?;
    let coarse = cross_entropy(coarse_probs, coarse_onehot)?;
    Ok(WeightedLoss {
        total: (T::one() - alpha) * coarse + alpha * fine,
        fine,
        coarse,
    })
}

/// Training objective on fine-class logits.
#[derive(Clone, Copy, Debug)]
pub enum Objective<'h> {
    /// Plain cross-entropy on the fine labels; no hierarchy involved.
    Flat,
    /// Weighted two-level loss; coarse targets are the mapped fine targets.
    Hierarchical { hierarchy: &'h Hierarchy, alpha: f64 },
}

impl Objective<'_> {
    /// Batch-mean loss and its gradient with respect to the logits.
    ///
    /// The coarse term reaches the logits through the group sums: every fine
    /// class in the target's group receives `∂ℓ/∂Q_g`, and the softmax Jacobian
    /// carries the resulting probability gradient back to the logits.
    pub fn evaluate<T: Scalar>(
        &self,
        logits: &Matrix<T>,
        labels: &[usize],
    ) -> Result<(WeightedLoss<T>, Matrix<T>)> {
        let (n, k) = logits.shape();
        if labels.len() != n {
            return Err(Error::ShapeMismatch {
                op: "objective",
                left: logits.shape(),
                right: (labels.len(), 1),
            });
        }
        let hier = match *self {
            Objective::Flat => None,
            Objective::Hierarchical { hierarchy, alpha } => {
                if hierarchy.num_fine() != k {
                    return Err(Error::invalid(format!(
                        "hierarchy covers {} classes, model predicts {k}",
                        hierarchy.num_fine()
                    )));
                }
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
                }
                Some((hierarchy, T::lit(alpha)))
            }
        };
        let floor = T::lit(PROB_FLOOR);
        let probs = softmax_rows(logits);
        let mut grad = Matrix::zeros(n, k);
        let mut gq = vec![T::zero(); k];
        let (mut fine_sum, mut coarse_sum) = (T::zero(), T::zero());
        let inv_n = T::one() / T::lit(n.max(1) as f64);

        for (i, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    num_classes: k,
                });
            }
            let q = probs.row(i);
            gq.iter_mut().for_each(|g| *g = T::zero());
            fine_sum += -q[y].max(floor).ln();
            if q[y] > floor {
                gq[y] = -T::one() / q[y];
            }
            if let Some((h, alpha)) = hier {
                let group = h.coarse_of(y);
                let mut mass = T::zero();
                for (j, &p) in q.iter().enumerate() {
                    if h.coarse_of(j) == group {
                        mass += p;
                    }
                }
                coarse_sum += -mass.max(floor).ln();
                let g_mass = if mass > floor { -T::one() / mass } else { T::zero() };
                let beta = T::one() - alpha;
                for (j, g) in gq.iter_mut().enumerate() {
                    let coarse_part = if h.coarse_of(j) == group { g_mass } else { T::zero() };
                    *g = alpha * *g + beta * coarse_part;
                }
            }
            let dot: T = q.iter().zip(&gq).map(|(&p, &g)| p * g).sum();
            for ((d, &p), &g) in grad.row_mut(i).iter_mut().zip(q).zip(&gq) {
                *d = p * (g - dot) * inv_n;
            }
        }

        let fine = fine_sum * inv_n;
        let loss = match hier {
            None => WeightedLoss {
                total: fine,
                fine,
                coarse: T::zero(),
            },
            Some((_, alpha)) => {
                let coarse = coarse_sum * inv_n;
                WeightedLoss {
                    total: (T::one() - alpha) * coarse + alpha * fine,
                    fine,
                    coarse,
                }
            }
        };
        Ok((loss, grad))
    }
}

/// Forward pass, objective and backward pass in one call.
pub fn loss_and_gradients<T: Scalar>(
    model: &MlpClassifier<T>,
    x: &Matrix<T>,
    labels: &[usize],
    objective: &Objective<'_>,
) -> Result<(WeightedLoss<T>, LayerGrads<T>)> {
    let (logits, cache) = mlp_forward(model, x)?;
    let (loss, d_logits) = objective.evaluate(&logits, labels)?;
    let grads = mlp_backward(model, &cache, &d_logits)?;
    Ok((loss, grads))
}
