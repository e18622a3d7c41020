use serde::{Deserialize, Serialize};

use crate::error::{LcnError, Result};

/// Per-epoch annealing of λ in the activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Anneal {
    /// `λ_t = t / total_epochs` for epoch `t = 1..=total`.
    LinearToRelu,
    Constant { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Per-output logistic link, mean over outputs.
    CrossEntropy,
    MeanSquaredError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    /// Adam with the running maximum of the second moment, no bias correction.
    Amsgrad { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn amsgrad() -> Self {
        OptimizerKind::Amsgrad {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checkpoint {
    /// Return the parameters after the last epoch.
    FinalEpoch,
    /// Return the parameters (including the initial ones) with the lowest
    /// full-pass training loss.
    BestTrainLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_every: usize,
    /// Multiplier applied every `lr_decay_every` epochs.
    pub lr_decay_factor: f64,
    pub anneal: Anneal,
    pub dropconnect_prob: f64,
    pub loss: LossKind,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub checkpoint: Checkpoint,
}

impl TrainConfig {
    /// Classification schedule: batch 64, lr 0.1 divided by 10 every 10
    /// epochs, 30 epochs, plain SGD.
    pub fn classification() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.1,
            lr_decay_every: 10,
            lr_decay_factor: 0.1,
            anneal: Anneal::LinearToRelu,
            dropconnect_prob: 0.0,
            loss: LossKind::CrossEntropy,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
            checkpoint: Checkpoint::FinalEpoch,
        }
    }

    /// Regression schedule: batch 64, lr 1e-4 divided by 10 every 30 epochs,
    /// 60 epochs, plain SGD.
    pub fn regression() -> Self {
        TrainConfig {
            epochs: 60,
            learning_rate: 1e-4,
            lr_decay_every: 30,
            loss: LossKind::MeanSquaredError,
            ..TrainConfig::classification()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LcnError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every must be positive".into());
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return bad(format!("lr_decay_factor must be positive, got {}", self.lr_decay_factor));
        }
        if !(0.0..1.0).contains(&self.dropconnect_prob) {
            return bad(format!(
                "dropconnect_prob must lie in [0, 1), got {}",
                self.dropconnect_prob
            ));
        }
        if let Anneal::Constant { lambda } = self.anneal {
            if !(0.0..=1.0).contains(&lambda) {
                return bad(format!("constant lambda must lie in [0, 1], got {lambda}"));
            }
        }
        if let OptimizerKind::Amsgrad { beta1, beta2, epsilon } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
                return bad("AMSGrad needs betas in [0, 1) and epsilon > 0".into());
            }
        }
        Ok(())
    }

    /// λ used during epoch `epoch` (1-based).
    pub fn lambda_at(&self, epoch: usize) -> f64 {
        match self.anneal {
            Anneal::LinearToRelu => {
                if self.epochs == 0 {
                    1.0
                } else {
                    epoch as f64 / self.epochs as f64
                }
            }
            Anneal::Constant { lambda } => lambda,
        }
    }

    /// Learning rate during epoch `epoch` (1-based), step decayed.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = (epoch.saturating_sub(1) / self.lr_decay_every) as i32;
        self.learning_rate * self.lr_decay_factor.powi(steps)
    }
}
