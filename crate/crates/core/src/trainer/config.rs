use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

use super::AdamConfig;

/// Hyperparameters for one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the fine term; `1.0` is FLAT training.
    pub alpha: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate every `lr_decay_every` epochs (0 disables decay).
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Drives weight initialization and batch shuffling.
    pub seed: u64,
    /// Hidden layer widths between the input and the K-way output.
    pub hidden: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<Hierarchy>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.5,
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-4,
            lr_decay_factor: 0.5,
            lr_decay_every: 50,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            hidden: vec![128, 64],
            hierarchy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.alpha < 1.0 && self.hierarchy.is_none() {
            return Err(Error::invalid(format!(
                "alpha = {} needs a hierarchy",
                self.alpha
            )));
        }
        if let Some(h) = &self.hierarchy {
            if h.num_coarse() < 2 && self.alpha < 1.0 {
                return Err(Error::invalid("an HC run needs at least two coarse groups"));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("bad learning rate {}", self.learning_rate)));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return Err(Error::invalid(format!(
                "bad lr_decay_factor {}",
                self.lr_decay_factor
            )));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::invalid("adam_eps must be positive"));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::invalid("hidden layers must have positive width"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// Learning rate in effect during (1-based) `epoch`: halved after epochs 50, 100, ... by default.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if self.lr_decay_every == 0 {
            return self.learning_rate;
        }
        let decays = epoch.saturating_sub(1) / self.lr_decay_every;
        self.learning_rate * self.lr_decay_factor.powi(decays as i32)
    }

    pub fn layer_dims(&self, input: usize, classes: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input);
        dims.extend(&self.hidden);
        dims.push(classes);
        dims
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves_at_fifty() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate_at(1), 1e-4);
        assert_eq!(c.learning_rate_at(50), 1e-4);
        assert_eq!(c.learning_rate_at(51), 5e-5);
        assert_eq!(c.learning_rate_at(101), 2.5e-5);
    }

    #[test]
    fn hc_without_hierarchy_is_invalid() {
        let c = TrainConfig::default();
        assert!(c.validate().is_err());
        let c = TrainConfig { alpha: 1.0, ..c };
        assert!(c.validate().is_ok());
    }

    #[test]
    fn defaults_follow_training_scheme() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.epochs, c.lr_decay_every), (64, 100, 50));
        assert_eq!(c.lr_decay_factor, 0.5);
        assert_eq!(c.alpha, 0.5);
    }

    #[test]
    fn json_round_trip() {
        let c = TrainConfig {
            hierarchy: Some(Hierarchy::contiguous(2, 2).unwrap()),
            ..TrainConfig::default()
        };
        let text = serde_json::to_string(&c).unwrap();
        let back: TrainConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
