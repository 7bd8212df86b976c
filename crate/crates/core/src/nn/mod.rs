//! Transformer stroke predictor on top of candle tensors.

mod im2col;
mod layers;
mod model;
mod params;
mod rowops;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use model::{EncoderRole, NetOutput, StrokeNet};
pub use params::ParamStore;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub patch_size: usize,
    pub query_count: usize,
    pub feature_channels: usize,
    pub model_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub head_count: usize,
    pub ffn_dim: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            patch_size: 32,
            query_count: 8,
            feature_channels: 128,
            model_dim: 256,
            encoder_layers: 3,
            decoder_layers: 3,
            head_count: 8,
            ffn_dim: 1024,
        }
    }
}

impl PredictorConfig {
    /// Scaled-down network for CPU experiments: 32 channels per encoder,
    /// width 64, 4 heads.
    pub fn small() -> Self {
        PredictorConfig {
            feature_channels: 32,
            model_dim: 64,
            head_count: 4,
            ffn_dim: 256,
            ..Self::default()
        }
    }

    /// Smallest useful network, sized for smoke-scale training runs on one
    /// CPU core.
    pub fn tiny() -> Self {
        PredictorConfig {
            feature_channels: 16,
            model_dim: 32,
            encoder_layers: 2,
            decoder_layers: 2,
            head_count: 2,
            ffn_dim: 128,
            ..Self::default()
        }
    }

    /// Tokens in the transformer sequence, `(P/4)^2`.
    pub fn token_count(&self) -> usize {
        let s = self.patch_size / 4;
        s * s
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("patch_size", self.patch_size),
            ("query_count", self.query_count),
            ("feature_channels", self.feature_channels),
            ("model_dim", self.model_dim),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("head_count", self.head_count),
            ("ffn_dim", self.ffn_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if self.patch_size % 4 != 0 {
            return Err(Error::InvalidConfig(format!(
                "patch size {} is not divisible by 4",
                self.patch_size
            )));
        }
        if 2 * self.feature_channels != self.model_dim {
            return Err(Error::InvalidConfig(format!(
                "model_dim {} must equal twice feature_channels {}",
                self.model_dim, self.feature_channels
            )));
        }
        if self.model_dim % self.head_count != 0 {
            return Err(Error::InvalidConfig(format!(
                "model_dim {} is not divisible by {} heads",
                self.model_dim, self.head_count
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        PredictorConfig::default().validate().unwrap();
        PredictorConfig::small().validate().unwrap();
        PredictorConfig::tiny().validate().unwrap();
        let bad = [
            PredictorConfig {
                patch_size: 30,
                ..Default::default()
            },
            PredictorConfig {
                model_dim: 200,
                ..Default::default()
            },
            PredictorConfig {
                head_count: 0,
                ..Default::default()
            },
            PredictorConfig {
                head_count: 3,
                feature_channels: 64,
                model_dim: 128,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        assert_eq!(PredictorConfig::default().token_count(), 64);
    }
}
