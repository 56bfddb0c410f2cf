use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{LayerGrads, MlpClassifier};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the model's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: LayerGrads<T>,
    pub v: LayerGrads<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(model: &MlpClassifier<T>) -> Self {
        AdamState {
            m: LayerGrads::zeros_like(model),
            v: LayerGrads::zeros_like(model),
            t: 0,
        }
    }
}

#[inline]
fn update<T: Scalar>(p: &mut T, g: T, m: &mut T, v: &mut T, c: &Coefs<T>) {
    *m = c.b1 * *m + (T::one() - c.b1) * g;
    *v = c.b2 * *v + (T::one() - c.b2) * g * g;
    let m_hat = *m / c.bias1;
    let v_hat = *v / c.bias2;
    *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
}

struct Coefs<T> {
    lr: T,
    b1: T,
    b2: T,
    eps: T,
    bias1: T,
    bias2: T,
}

/// One bias-corrected Adam update of every parameter.
///
/// Non-finite gradients abort without touching the model or the state.
pub fn adam_step<T: Scalar>(
    model: &mut MlpClassifier<T>,
    grads: &LayerGrads<T>,
    state: &mut AdamState<T>,
    lr: T,
    cfg: &AdamConfig,
) -> Result<()> {
    if !grads.matches(model) || !state.m.matches(model) {
        return Err(Error::invalid("gradient or optimizer state shape differs from the model"));
    }
    if let Some((i, g)) = grads.values().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient of parameter {i} is {g} at optimizer step {}",
            state.t + 1
        )));
    }
    state.t += 1;
    let t = state.t as f64;
    let c = Coefs {
        lr,
        b1: T::lit(cfg.beta1),
        b2: T::lit(cfg.beta2),
        eps: T::lit(cfg.eps),
        bias1: T::lit(1.0 - cfg.beta1.powf(t)),
        bias2: T::lit(1.0 - cfg.beta2.powf(t)),
    };
    for (l, layer) in model.layers_mut().iter_mut().enumerate() {
        let gw = grads.d_weights[l].data();
        let mw = state.m.d_weights[l].data_mut();
        let vw = state.v.d_weights[l].data_mut();
        for (((p, &g), m), v) in layer.weights.data_mut().iter_mut().zip(gw).zip(mw).zip(vw) {
            update(p, g, m, v, &c);
        }
        let gb = &grads.d_biases[l];
        let mb = &mut state.m.d_biases[l];
        let vb = &mut state.v.d_biases[l];
        for (((p, &g), m), v) in layer.biases.iter_mut().zip(gb).zip(mb).zip(vb) {
            update(p, g, m, v, &c);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::Matrix;

    fn scalar_model(w: f64) -> MlpClassifier<f64> {
        let mut m = MlpClassifier::zeros(&[1, 1]).unwrap();
        *m.param_mut(0).unwrap() = w;
        m
    }

    fn scalar_grad(model: &MlpClassifier<f64>, g: f64) -> LayerGrads<f64> {
        let mut grads = LayerGrads::zeros_like(model);
        grads.d_weights[0] = Matrix::from_vec(1, 1, vec![g]).unwrap();
        grads
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = scalar_model(0.7);
        let before = m.clone();
        let mut st = AdamState::new(&m);
        let g = LayerGrads::zeros_like(&m);
        adam_step(&mut m, &g, &mut st, 1e-3, &AdamConfig::default()).unwrap();
        assert_eq!(m, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_matches_scalar_reimplementation() {
        let cfg = AdamConfig::default();
        let lr = 1e-4;
        let mut m = scalar_model(0.0);
        let mut st = AdamState::new(&m);
        let grad = scalar_grad(&m, 1.0);
        adam_step(&mut m, &grad, &mut st, lr, &cfg).unwrap();
        // Independent scalar Adam: m1 = (1-b1)g, v1 = (1-b2)g², corrected by (1-b^1).
        let m1 = (1.0 - cfg.beta1) * 1.0;
        let v1 = (1.0 - cfg.beta2) * 1.0;
        let expect = -lr * (m1 / (1.0 - cfg.beta1)) / ((v1 / (1.0 - cfg.beta2)).sqrt() + cfg.eps);
        assert!((*m.param_mut(0).unwrap() - expect).abs() < 1e-18);
        assert!((expect + lr / (1.0 + cfg.eps)).abs() < 1e-18);
    }

    #[test]
    fn constant_gradient_steps_have_magnitude_lr() {
        let cfg = AdamConfig::default();
        let lr = 1e-3;
        let g = -0.37;
        let mut m = scalar_model(0.0);
        let mut st = AdamState::new(&m);
        let mut prev = 0.0;
        for step in 1..=500 {
            let grad = scalar_grad(&m, g);
            adam_step(&mut m, &grad, &mut st, lr, &cfg).unwrap();
            let now = *m.param_mut(0).unwrap();
            let delta = now - prev;
            // With a constant gradient the corrected ratio m̂/√v̂ is exactly g/|g|.
            let expect = lr * 0.37 / (0.37 + cfg.eps);
            assert!((delta - expect).abs() < 1e-12, "step {step}: {delta}");
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut m = scalar_model(1.0);
        let before = m.clone();
        let mut st = AdamState::new(&m);
        let grad = scalar_grad(&m, f64::NAN);
        let err = adam_step(&mut m, &grad, &mut st, 1e-3, &AdamConfig::default());
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(m, before);
        assert_eq!(st.t, 0);
    }
}
