use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Loss weights for (bona fide, spoof).
    pub class_weights: [f64; 2],
    /// Seeds batch order, crops and dropout.
    pub seed: u64,
    /// Save an extra checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 8,
            epochs: 10,
            class_weights: [1.0, 1.0],
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("eps", self.eps),
            ("class_weights[0]", self.class_weights[0]),
            ("class_weights[1]", self.class_weights[1]),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config {
                    path: key.into(),
                    msg: format!("must be positive, got {v}"),
                });
            }
        }
        for (key, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config {
                    path: key.into(),
                    msg: format!("must lie in [0, 1), got {v}"),
                });
            }
        }
        for (key, v) in [("batch_size", self.batch_size), ("epochs", self.epochs)] {
            if v == 0 {
                return Err(Error::Config {
                    path: key.into(),
                    msg: "must be at least 1".into(),
                });
            }
        }
        Ok(())
    }
}
