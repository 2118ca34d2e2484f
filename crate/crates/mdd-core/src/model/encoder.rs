//! Value-path encoder: recurrent layer over (optionally pair-concatenated)
//! feature frames, emitting attendable states and per-frame CTC
//! log-probability rows.

use crate::diff::num::log_softmax_into;
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::inventory::FeatureMatrix;
use crate::model::config::ModelConfig;
use crate::model::params::ModelParams;

/// out[o] = b[o] + sum_j w[o,j] * x[j]; `b = None` means zero bias.
/// Accumulation order matches the tape's `affine` primitive.
pub(crate) fn affine_into(w: &Tensor, x: &[f64], b: Option<&Tensor>, out: &mut [f64]) {
    let rows = w.shape()[0];
    let cols = w.shape()[1];
    debug_assert_eq!(cols, x.len());
    debug_assert_eq!(rows, out.len());
    for o in 0..rows {
        let wrow = &w.data()[o * cols..(o + 1) * cols];
        let mut acc = 0.0;
        for j in 0..cols {
            acc += wrow[j] * x[j];
        }
        out[o] = match b {
            Some(b) => b.data()[o] + acc,
            None => acc,
        };
    }
}

/// Concatenates frames into groups of `stride`, zero-padding the tail.
pub(crate) fn group_frames(features: &FeatureMatrix, stride: usize) -> Vec<Vec<f64>> {
    let d = features.dim();
    let t_out = features.frames().div_ceil(stride);
    (0..t_out)
        .map(|k| {
            let mut g = vec![0.0; d * stride];
            for s in 0..stride {
                let t = k * stride + s;
                if t < features.frames() {
                    g[s * d..(s + 1) * d].copy_from_slice(features.row(t));
                }
            }
            g
        })
        .collect()
}

/// Encoder states and per-frame CTC log-probabilities, one row each per
/// downsampled frame.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub states: Vec<Vec<f64>>,
    pub ctc_log_probs: Vec<Vec<f64>>,
}

impl EncoderOutput {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Runs the encoder. Deterministic given params and input; every CTC row
/// exponentiates to sum 1.
pub fn encode(
    params: &ModelParams,
    config: &ModelConfig,
    features: &FeatureMatrix,
) -> Result<EncoderOutput> {
    if features.dim() != config.feature_dim {
        return Err(Error::Config(format!(
            "feature dim {} does not match model feature_dim {}",
            features.dim(),
            config.feature_dim
        )));
    }
    let he = config.encoder_hidden;
    let head = params.head_size();
    let groups = group_frames(features, config.downsample_stride);
    let mut states = Vec::with_capacity(groups.len());
    let mut ctc_rows = Vec::with_capacity(groups.len());
    let mut h = vec![0.0; he];
    let mut in_part = vec![0.0; he];
    let mut rec_part = vec![0.0; he];
    let mut logits = vec![0.0; head];
    for g in &groups {
        affine_into(&params.enc_w_in, g, Some(&params.enc_b), &mut in_part);
        affine_into(&params.enc_w_rec, &h, None, &mut rec_part);
        for i in 0..he {
            h[i] = (in_part[i] + rec_part[i]).tanh();
        }
        affine_into(&params.ctc_w, &h, Some(&params.ctc_b), &mut logits);
        let mut row = vec![0.0; head];
        log_softmax_into(&logits, &mut row);
        states.push(h.clone());
        ctc_rows.push(row);
    }
    Ok(EncoderOutput {
        states,
        ctc_log_probs: ctc_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(t: usize, d: usize) -> FeatureMatrix {
        let data: Vec<f64> = (0..t * d).map(|i| (i as f64 * 0.37).sin()).collect();
        FeatureMatrix::new(t, d, data).unwrap()
    }

    #[test]
    fn stride_two_halves_length() {
        let config = ModelConfig {
            encoder_hidden: 4,
            decoder_hidden: 4,
            attention_dim: 4,
            ..ModelConfig::new(3)
        };
        let params = ModelParams::init(&config, 2).unwrap();
        let out = encode(&params, &config, &features(4, 3)).unwrap();
        assert_eq!(out.len(), 2);
        let out5 = encode(&params, &config, &features(5, 3)).unwrap();
        assert_eq!(out5.len(), 3);
    }

    #[test]
    fn zero_params_give_uniform_rows() {
        let config = ModelConfig {
            encoder_hidden: 4,
            decoder_hidden: 4,
            attention_dim: 4,
            ..ModelConfig::new(3)
        };
        let params = ModelParams::zeros(&config, 2).unwrap();
        let out = encode(&params, &config, &features(4, 3)).unwrap();
        let expected = (1.0f64 / 3.0).ln();
        for row in &out.ctc_log_probs {
            for &v in row {
                assert!((v - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rows_normalize_under_random_params() {
        let config = ModelConfig {
            encoder_hidden: 6,
            decoder_hidden: 4,
            attention_dim: 4,
            seed: 3,
            ..ModelConfig::new(5)
        };
        let params = ModelParams::init(&config, 7).unwrap();
        let out = encode(&params, &config, &features(9, 5)).unwrap();
        for row in &out.ctc_log_probs {
            let sum: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((sum - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let config = ModelConfig::new(3);
        let params = ModelParams::init(&config, 2).unwrap();
        let err = encode(&params, &config, &features(4, 2)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
