use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the clustering-head trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub num_heads: usize,
    pub num_clusters: usize,
    pub tau_student: f64,
    pub tau_teacher: f64,
    /// Exponent inside the pointwise mutual information term.
    pub beta: f64,
    /// Ceiling of the cosine-scheduled cross-entropy weight.
    pub lambda_max: f64,
    pub teacher_momentum: f64,
    pub sk_iters: usize,
    pub epochs: usize,
    /// Epochs of linear learning-rate warmup from 0.
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Neighbors drawn per anchor for the teacher target; 1 disables smoothing.
    pub smoothing_m: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_heads: 50,
            num_clusters: 10,
            tau_student: 0.1,
            tau_teacher: 0.1,
            beta: 0.6,
            lambda_max: 0.5,
            teacher_momentum: 0.996,
            sk_iters: 3,
            epochs: 400,
            warmup_epochs: 100,
            batch_size: 1024,
            lr: 1.25e-6,
            weight_decay: 1e-4,
            smoothing_m: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings for small synthetic runs on a single core.
    pub fn desk(num_clusters: usize) -> Self {
        TrainConfig {
            num_heads: 10,
            num_clusters,
            epochs: 50,
            warmup_epochs: 5,
            batch_size: 256,
            lr: 1e-3,
            teacher_momentum: 0.99,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.num_heads == 0 {
            return bad("num_heads must be at least 1".into());
        }
        if self.num_clusters < 2 {
            return bad(format!(
                "num_clusters must be at least 2, got {}",
                self.num_clusters
            ));
        }
        if !(self.tau_student > 0.0 && self.tau_teacher > 0.0) {
            return bad("temperatures must be positive".into());
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta must be in (0, 1], got {}", self.beta));
        }
        if !(self.lambda_max >= 0.0 && self.lambda_max.is_finite()) {
            return bad(format!("lambda_max must be >= 0, got {}", self.lambda_max));
        }
        if !(0.0..=1.0).contains(&self.teacher_momentum) {
            return bad(format!(
                "teacher_momentum must be in [0, 1], got {}",
                self.teacher_momentum
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr >= 0.0
            && self.lr.is_finite()
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite())
        {
            return bad("lr and weight_decay must be finite and >= 0".into());
        }
        if self.smoothing_m == 0 {
            return bad("smoothing_m must be at least 1".into());
        }
        Ok(())
    }
}
