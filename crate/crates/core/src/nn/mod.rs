//! Feed-forward noise-prediction network with analytic gradients.
//!
//! The network maps a noisy data vector plus a sinusoidal embedding of the
//! diffusion step to a same-shaped noise estimate. Gradients are computed by
//! hand-rolled backpropagation for the fixed MLP topology; optimization uses
//! ADAM with a one-cycle learning-rate schedule.

mod adam;
mod mlp;
mod schedule;

pub use adam::AdamState;
pub use mlp::{Activation, Gradients, MlpConfig, MlpNetwork};
pub use schedule::OneCycleSchedule;

use serde::{Deserialize, Serialize};

/// Training-loop hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Validation-loss evaluation interval, in epochs.
    pub val_interval: usize,
    pub max_lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1024,
            max_epochs: 8000,
            patience: 100,
            val_interval: 1,
            max_lr: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.batch_size < 1 {
            return Err(crate::Error::Config("batch_size must be >= 1".into()));
        }
        if self.patience < 1 {
            return Err(crate::Error::Config("patience must be >= 1".into()));
        }
        if self.val_interval < 1 {
            return Err(crate::Error::Config("val_interval must be >= 1".into()));
        }
        Ok(())
    }
}
