//! Model configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the reduced-scale recognizer. Vocabulary sizes are
/// derived from the phone inventory at parameter-initialization time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feature_dim: usize,
    #[serde(default = "default_hidden")]
    pub encoder_hidden: usize,
    #[serde(default = "default_hidden")]
    pub decoder_hidden: usize,
    #[serde(default = "default_hidden")]
    pub attention_dim: usize,
    /// Frame-pair concatenation factor; 1 or 2.
    #[serde(default = "default_stride")]
    pub downsample_stride: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> usize {
    32
}

fn default_stride() -> usize {
    2
}

impl ModelConfig {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            encoder_hidden: default_hidden(),
            decoder_hidden: default_hidden(),
            attention_dim: default_hidden(),
            downsample_stride: default_stride(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("feature_dim", self.feature_dim),
            ("encoder_hidden", self.encoder_hidden),
            ("decoder_hidden", self.decoder_hidden),
            ("attention_dim", self.attention_dim),
        ];
        for (name, v) in extents {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !matches!(self.downsample_stride, 1 | 2) {
            return Err(Error::Config(format!(
                "downsample_stride must be 1 or 2, got {}",
                self.downsample_stride
            )));
        }
        Ok(())
    }

    /// Encoder input width after frame grouping.
    pub fn grouped_dim(&self) -> usize {
        self.feature_dim * self.downsample_stride
    }

    /// Encoder output length for `t` input frames.
    pub fn downsampled_len(&self, t: usize) -> usize {
        t.div_ceil(self.downsample_stride)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_stride_and_extents() {
        let mut c = ModelConfig::new(8);
        c.validate().unwrap();
        c.downsample_stride = 3;
        assert!(c.validate().is_err());
        c.downsample_stride = 2;
        c.encoder_hidden = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn ceiling_downsampling() {
        let c = ModelConfig::new(4);
        assert_eq!(c.downsampled_len(4), 2);
        assert_eq!(c.downsampled_len(5), 3);
        let mut c1 = c;
        c1.downsample_stride = 1;
        assert_eq!(c1.downsampled_len(5), 5);
    }
}
