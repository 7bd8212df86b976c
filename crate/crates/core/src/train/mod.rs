//! Training loop, optimizer and checkpoints.

mod adam;
mod checkpoint;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stroke::LossWeights;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, NamedTensor, RngState, CHECKPOINT_VERSION};
pub use trainer::{
    read_metrics, run_training, MetricRecord, RunOptions, StepStats, Trainer, TrainingSummary,
    CHECKPOINT_FILE, METRICS_FILE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub log_every: u64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub brush: String,
    pub brush_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 30_000,
            batch_size: 128,
            learning_rate: 1e-4,
            weights: LossWeights::default(),
            seed: 0,
            checkpoint_every: 1000,
            log_every: 10,
            grad_clip: 5.0,
            brush: "oil".into(),
            brush_size: crate::brush::DEFAULT_BRUSH_SIZE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "iterations and batch size must be positive".into(),
            ));
        }
        if self.checkpoint_every == 0 || self.log_every == 0 {
            return Err(Error::InvalidConfig(
                "checkpoint and log intervals must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::InvalidConfig("gradient clip must be >= 0".into()));
        }
        self.weights.validate()
    }
}
