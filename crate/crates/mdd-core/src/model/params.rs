//! Parameter tensors of the recognizer and their canonical ordering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;

/// Names of the parameter tensors, in canonical order. Gradient vectors,
/// optimizer state, and checkpoint blocks all follow this order.
pub const PARAM_NAMES: [&str; 16] = [
    "enc_w_in",
    "enc_w_rec",
    "enc_b",
    "ctc_w",
    "ctc_b",
    "embed",
    "att_w_state",
    "att_w_enc",
    "att_b",
    "att_v",
    "dec_w_in",
    "dec_w_ctx",
    "dec_w_rec",
    "dec_b",
    "out_w",
    "out_b",
];

/// All trainable tensors. The embedding table has one row per phone plus a
/// start-of-sequence row at the last index; both output heads have
/// `num_phones + 1` rows (blank last for CTC, eos last for attention).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub enc_w_in: Tensor,
    pub enc_w_rec: Tensor,
    pub enc_b: Tensor,
    pub ctc_w: Tensor,
    pub ctc_b: Tensor,
    pub embed: Tensor,
    pub att_w_state: Tensor,
    pub att_w_enc: Tensor,
    pub att_b: Tensor,
    pub att_v: Tensor,
    pub dec_w_in: Tensor,
    pub dec_w_ctx: Tensor,
    pub dec_w_rec: Tensor,
    pub dec_b: Tensor,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

fn shapes(config: &ModelConfig, num_phones: usize) -> [Vec<usize>; 16] {
    let din = config.grouped_dim();
    let he = config.encoder_hidden;
    let hd = config.decoder_hidden;
    let a = config.attention_dim;
    let head = num_phones + 1;
    [
        vec![he, din],
        vec![he, he],
        vec![he],
        vec![head, he],
        vec![head],
        vec![head, hd], // phone rows + sos row
        vec![a, hd],
        vec![a, he],
        vec![a],
        vec![a],
        vec![hd, hd],
        vec![hd, he],
        vec![hd, hd],
        vec![hd],
        vec![head, hd],
        vec![head],
    ]
}

impl ModelParams {
    /// Uniform [-0.1, 0.1] initialization from the config seed, filling
    /// tensors in canonical order.
    pub fn init(config: &ModelConfig, num_phones: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tensors = shapes(config, num_phones).map(|shape| {
            let n: usize = shape.iter().product();
            Tensor::from_parts(shape, (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect())
        });
        Ok(Self::from_array(tensors))
    }

    pub fn zeros(config: &ModelConfig, num_phones: usize) -> Result<Self> {
        config.validate()?;
        let tensors = shapes(config, num_phones).map(Tensor::zeros);
        Ok(Self::from_array(tensors))
    }

    fn from_array(t: [Tensor; 16]) -> Self {
        let [enc_w_in, enc_w_rec, enc_b, ctc_w, ctc_b, embed, att_w_state, att_w_enc, att_b, att_v, dec_w_in, dec_w_ctx, dec_w_rec, dec_b, out_w, out_b] =
            t;
        Self {
            enc_w_in,
            enc_w_rec,
            enc_b,
            ctc_w,
            ctc_b,
            embed,
            att_w_state,
            att_w_enc,
            att_b,
            att_v,
            dec_w_in,
            dec_w_ctx,
            dec_w_rec,
            dec_b,
            out_w,
            out_b,
        }
    }

    /// Tensors in canonical order.
    pub fn tensors(&self) -> [&Tensor; 16] {
        [
            &self.enc_w_in,
            &self.enc_w_rec,
            &self.enc_b,
            &self.ctc_w,
            &self.ctc_b,
            &self.embed,
            &self.att_w_state,
            &self.att_w_enc,
            &self.att_b,
            &self.att_v,
            &self.dec_w_in,
            &self.dec_w_ctx,
            &self.dec_w_rec,
            &self.dec_b,
            &self.out_w,
            &self.out_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 16] {
        [
            &mut self.enc_w_in,
            &mut self.enc_w_rec,
            &mut self.enc_b,
            &mut self.ctc_w,
            &mut self.ctc_b,
            &mut self.embed,
            &mut self.att_w_state,
            &mut self.att_w_enc,
            &mut self.att_b,
            &mut self.att_v,
            &mut self.dec_w_in,
            &mut self.dec_w_ctx,
            &mut self.dec_w_rec,
            &mut self.dec_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        let arr: [Tensor; 16] = tensors.try_into().map_err(|v: Vec<Tensor>| {
            Error::Contract(format!("expected 16 parameter tensors, got {}", v.len()))
        })?;
        Ok(Self::from_array(arr))
    }

    /// Output head size (phones + blank / eos).
    pub fn head_size(&self) -> usize {
        self.ctc_b.shape()[0]
    }

    /// Number of real phones the model was built for.
    pub fn num_phones(&self) -> usize {
        self.head_size() - 1
    }

    /// Embedding row used before the first decoder step.
    pub fn sos_row(&self) -> usize {
        self.embed.shape()[0] - 1
    }

    pub fn total_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Registers every tensor as a tape input, in canonical order.
    pub fn register(&self, tape: &Tape) -> ParamVars {
        let vars: Vec<Var> = self.tensors().iter().map(|t| tape.input((*t).clone())).collect();
        ParamVars::from_vars(&vars)
    }
}

/// Tape handles to the parameter tensors, same layout as [`ModelParams`].
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub enc_w_in: Var,
    pub enc_w_rec: Var,
    pub enc_b: Var,
    pub ctc_w: Var,
    pub ctc_b: Var,
    pub embed: Var,
    pub att_w_state: Var,
    pub att_w_enc: Var,
    pub att_b: Var,
    pub att_v: Var,
    pub dec_w_in: Var,
    pub dec_w_ctx: Var,
    pub dec_w_rec: Var,
    pub dec_b: Var,
    pub out_w: Var,
    pub out_b: Var,
}

impl ParamVars {
    /// Builds from 16 vars in canonical order.
    pub fn from_vars(vars: &[Var]) -> Self {
        assert_eq!(vars.len(), 16, "expected 16 parameter vars");
        Self {
            enc_w_in: vars[0],
            enc_w_rec: vars[1],
            enc_b: vars[2],
            ctc_w: vars[3],
            ctc_b: vars[4],
            embed: vars[5],
            att_w_state: vars[6],
            att_w_enc: vars[7],
            att_b: vars[8],
            att_v: vars[9],
            dec_w_in: vars[10],
            dec_w_ctx: vars[11],
            dec_w_rec: vars[12],
            dec_b: vars[13],
            out_w: vars[14],
            out_b: vars[15],
        }
    }

    pub fn vars(&self) -> [Var; 16] {
        [
            self.enc_w_in,
            self.enc_w_rec,
            self.enc_b,
            self.ctc_w,
            self.ctc_b,
            self.embed,
            self.att_w_state,
            self.att_w_enc,
            self.att_b,
            self.att_v,
            self.dec_w_in,
            self.dec_w_ctx,
            self.dec_w_rec,
            self.dec_b,
            self.out_w,
            self.out_b,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let config = ModelConfig {
            seed: 42,
            ..ModelConfig::new(4)
        };
        let a = ModelParams::init(&config, 5).unwrap();
        let b = ModelParams::init(&config, 5).unwrap();
        assert_eq!(a, b);
        for t in a.tensors() {
            assert!(t.data().iter().all(|v| v.abs() <= 0.1));
        }
        assert_eq!(a.head_size(), 6);
        assert_eq!(a.sos_row(), 5);
    }

    #[test]
    fn seed_changes_parameters() {
        let c0 = ModelConfig { seed: 0, ..ModelConfig::new(4) };
        let c1 = ModelConfig { seed: 1, ..ModelConfig::new(4) };
        assert_ne!(
            ModelParams::init(&c0, 3).unwrap(),
            ModelParams::init(&c1, 3).unwrap()
        );
    }
}
