//! Tape-recorded twin of the value-path model. Mirrors the encoder and
//! decoder step math primitive by primitive (same helpers, same operation
//! order) so taped values match the value path bit for bit.

use crate::ctc::ctc_log_prob_var;
use crate::diff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::inventory::{FeatureMatrix, PhoneId};
use crate::model::config::ModelConfig;
use crate::model::encoder::group_frames;
use crate::model::params::{ModelParams, ParamVars};

/// Encoder forward pass recorded on a tape.
pub struct TapedEncoding {
    pub states: Vec<Var>,
    /// Per-frame CTC log-probability rows, each `[head]`.
    pub ctc_rows: Vec<Var>,
}

/// The recognizer bound to a tape for loss construction.
pub struct TapedModel<'t> {
    pub tape: &'t Tape,
    pub vars: ParamVars,
    pub config: ModelConfig,
    num_phones: usize,
    zero_he: Var,
    zero_hd: Var,
}

impl<'t> TapedModel<'t> {
    /// Registers the params as tape inputs.
    pub fn new(tape: &'t Tape, params: &ModelParams, config: &ModelConfig) -> Self {
        let vars = params.register(tape);
        Self::from_vars(tape, vars, config, params.num_phones())
    }

    /// Binds existing vars (canonical order) — used by gradient checks.
    pub fn from_vars(
        tape: &'t Tape,
        vars: ParamVars,
        config: &ModelConfig,
        num_phones: usize,
    ) -> Self {
        Self {
            tape,
            vars,
            config: *config,
            num_phones,
            zero_he: tape.constant(Tensor::zeros(vec![config.encoder_hidden])),
            zero_hd: tape.constant(Tensor::zeros(vec![config.decoder_hidden])),
        }
    }

    pub fn num_phones(&self) -> usize {
        self.num_phones
    }

    fn eos(&self) -> usize {
        self.num_phones
    }

    pub fn encode(&self, features: &FeatureMatrix) -> Result<TapedEncoding> {
        if features.dim() != self.config.feature_dim {
            return Err(Error::Config(format!(
                "feature dim {} does not match model feature_dim {}",
                features.dim(),
                self.config.feature_dim
            )));
        }
        let tape = self.tape;
        let groups = group_frames(features, self.config.downsample_stride);
        let mut states = Vec::with_capacity(groups.len());
        let mut ctc_rows = Vec::with_capacity(groups.len());
        let mut h = self.zero_he;
        for g in &groups {
            let gv = tape.constant(Tensor::vector(g.clone()));
            let in_part = tape.affine(gv, self.vars.enc_w_in, self.vars.enc_b)?;
            let rec_part = tape.affine(h, self.vars.enc_w_rec, self.zero_he)?;
            h = tape.tanh(tape.add(in_part, rec_part)?);
            let logits = tape.affine(h, self.vars.ctc_w, self.vars.ctc_b)?;
            ctc_rows.push(tape.log_softmax(logits, 0)?);
            states.push(h);
        }
        Ok(TapedEncoding { states, ctc_rows })
    }

    /// One decoder step; returns (next state, log-distribution var).
    fn decoder_step(
        &self,
        enc: &TapedEncoding,
        state: Var,
        prev: Option<PhoneId>,
    ) -> Result<(Var, Var)> {
        let tape = self.tape;
        let embed_row = prev.unwrap_or(self.num_phones); // sos at the last row
        let e = tape.embed(self.vars.embed, embed_row)?;

        let query = tape.affine(state, self.vars.att_w_state, self.vars.att_b)?;
        let zero_a = tape.constant(Tensor::zeros(vec![self.config.attention_dim]));
        let mut scores = Vec::with_capacity(enc.states.len());
        for &h_t in &enc.states {
            let key = tape.affine(h_t, self.vars.att_w_enc, zero_a)?;
            let u = tape.tanh(tape.add(query, key)?);
            scores.push(tape.sum(tape.mul(self.vars.att_v, u)?));
        }
        let score_vec = tape.concat(
            &scores
                .iter()
                .map(|&s| tape.lift_scalar(s))
                .collect::<Vec<_>>(),
            0,
        )?;
        let attention = tape.softmax(score_vec, 0)?;

        let mut context: Option<Var> = None;
        for (t, &h_t) in enc.states.iter().enumerate() {
            let w_t = tape.row(attention, t)?;
            let term = tape.mul(w_t, h_t)?;
            context = Some(match context {
                Some(c) => tape.add(c, term)?,
                None => term,
            });
        }
        let context = context.ok_or_else(|| Error::Contract("empty encoding".to_string()))?;

        let in_part = tape.affine(e, self.vars.dec_w_in, self.vars.dec_b)?;
        let ctx_part = tape.affine(context, self.vars.dec_w_ctx, self.zero_hd)?;
        let rec_part = tape.affine(state, self.vars.dec_w_rec, self.zero_hd)?;
        let hidden = tape.tanh(tape.add(tape.add(in_part, ctx_part)?, rec_part)?);

        let logits = tape.affine(hidden, self.vars.out_w, self.vars.out_b)?;
        let log_probs = tape.log_softmax(logits, 0)?;
        Ok((hidden, log_probs))
    }

    /// Teacher-forced attention score of `ids` (empty allowed), including
    /// the terminal eos step. Differentiable.
    pub fn att_score(&self, enc: &TapedEncoding, ids: &[PhoneId]) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&p| p >= self.num_phones) {
            return Err(Error::Contract(format!(
                "sequence contains non-phone id {bad}"
            )));
        }
        let tape = self.tape;
        let mut state = self.zero_hd;
        let mut prev = None;
        let mut total: Option<Var> = None;
        for &p in ids {
            let (next, log_probs) = self.decoder_step(enc, state, prev)?;
            let term = tape.row(log_probs, p)?;
            total = Some(match total {
                Some(t) => tape.add(t, term)?,
                None => term,
            });
            state = next;
            prev = Some(p);
        }
        let (_, log_probs) = self.decoder_step(enc, state, prev)?;
        let eos_term = tape.row(log_probs, self.eos())?;
        Ok(match total {
            Some(t) => tape.add(t, eos_term)?,
            None => eos_term,
        })
    }

    /// Differentiable exact CTC score of `ids` over this encoding.
    /// Unreachable targets become a constant sentinel.
    pub fn ctc_score(&self, enc: &TapedEncoding, ids: &[PhoneId]) -> Result<Var> {
        ctc_log_prob_var(self.tape, &enc.ctc_rows, ids)
    }

    /// alpha * ctc + (1 - alpha) * att, the joint log-score.
    pub fn joint_score(&self, enc: &TapedEncoding, ids: &[PhoneId], alpha: f64) -> Result<Var> {
        let tape = self.tape;
        let ctc = self.ctc_score(enc, ids)?;
        let att = self.att_score(enc, ids)?;
        tape.add(tape.scale(ctc, alpha), tape.scale(att, 1.0 - alpha))
    }
}

impl Tape {
    /// Reshapes a one-value var to `[1]` so scalars can be concatenated.
    pub fn lift_scalar(&self, v: Var) -> Var {
        let value = self.value(v);
        debug_assert!(value.is_scalar());
        self.custom(
            &[v],
            Tensor::from_parts(vec![1], value.data().to_vec()),
            |g, sink| sink(0, Tensor::scalar(g.data()[0])),
        )
    }
}
