//! Value-path attention decoder: one autoregressive step at a time, with
//! additive content-based attention over the encoder states.

use crate::diff::num::{log_softmax_into, softmax_into};
use crate::error::{Error, Result};
use crate::inventory::{PhoneId, PhoneSequence};
use crate::model::config::ModelConfig;
use crate::model::encoder::{affine_into, EncoderOutput};
use crate::model::params::ModelParams;

/// Recurrent decoder state (hidden vector). The initial state is zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub hidden: Vec<f64>,
}

impl DecoderState {
    pub fn initial(config: &ModelConfig) -> Self {
        Self {
            hidden: vec![0.0; config.decoder_hidden],
        }
    }
}

/// Output of one decoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: DecoderState,
    /// Log-distribution over `num_phones + 1` tokens, eos last. Sums to 1
    /// after exp.
    pub log_probs: Vec<f64>,
    /// Attention weights over encoder states; nonnegative, sum 1.
    pub attention: Vec<f64>,
}

/// One teacher-forcing / search step. `prev` is the previously emitted
/// phone, or `None` at the start of the sequence.
pub fn decoder_step(
    params: &ModelParams,
    config: &ModelConfig,
    enc: &EncoderOutput,
    state: &DecoderState,
    prev: Option<PhoneId>,
) -> Result<StepOutput> {
    if enc.is_empty() {
        return Err(Error::Contract("decoder needs encoder states".to_string()));
    }
    let num_phones = params.num_phones();
    if let Some(p) = prev {
        if p >= num_phones {
            return Err(Error::Contract(format!(
                "prev phone {p} out of range (vocab {num_phones})"
            )));
        }
    }
    let hd = config.decoder_hidden;
    let he = config.encoder_hidden;
    let a_dim = config.attention_dim;
    let head = params.head_size();

    let embed_row = prev.unwrap_or_else(|| params.sos_row());
    let e = params.embed.matrix_row(embed_row);

    // additive attention: score_t = v . tanh(Wq s + Wk h_t + b)
    let mut query = vec![0.0; a_dim];
    affine_into(&params.att_w_state, &state.hidden, Some(&params.att_b), &mut query);
    let mut key = vec![0.0; a_dim];
    let mut scores = vec![0.0; enc.len()];
    for (t, h_t) in enc.states.iter().enumerate() {
        affine_into(&params.att_w_enc, h_t, None, &mut key);
        let mut dot = 0.0;
        for i in 0..a_dim {
            dot += params.att_v.data()[i] * (query[i] + key[i]).tanh();
        }
        scores[t] = dot;
    }
    let mut attention = vec![0.0; enc.len()];
    softmax_into(&scores, &mut attention);

    let mut context = vec![0.0; he];
    for (t, h_t) in enc.states.iter().enumerate() {
        let w = attention[t];
        for i in 0..he {
            context[i] += w * h_t[i];
        }
    }

    let mut in_part = vec![0.0; hd];
    affine_into(&params.dec_w_in, e, Some(&params.dec_b), &mut in_part);
    let mut ctx_part = vec![0.0; hd];
    affine_into(&params.dec_w_ctx, &context, None, &mut ctx_part);
    let mut rec_part = vec![0.0; hd];
    affine_into(&params.dec_w_rec, &state.hidden, None, &mut rec_part);
    let mut hidden = vec![0.0; hd];
    for i in 0..hd {
        hidden[i] = (in_part[i] + ctx_part[i] + rec_part[i]).tanh();
    }

    let mut logits = vec![0.0; head];
    affine_into(&params.out_w, &hidden, Some(&params.out_b), &mut logits);
    let mut log_probs = vec![0.0; head];
    log_softmax_into(&logits, &mut log_probs);

    Ok(StepOutput {
        state: DecoderState { hidden },
        log_probs,
        attention,
    })
}

/// Teacher-forced attention score of an arbitrary (possibly empty) id
/// sequence, including the terminal eos step.
pub fn att_score(
    params: &ModelParams,
    config: &ModelConfig,
    enc: &EncoderOutput,
    ids: &[PhoneId],
) -> Result<f64> {
    let mut state = DecoderState::initial(config);
    let mut prev = None;
    let mut total = 0.0;
    for &p in ids {
        let step = decoder_step(params, config, enc, &state, prev)?;
        if p >= params.num_phones() {
            return Err(Error::Contract(format!(
                "sequence contains non-phone id {p}"
            )));
        }
        total += step.log_probs[p];
        state = step.state;
        prev = Some(p);
    }
    let step = decoder_step(params, config, enc, &state, prev)?;
    total += step.log_probs[params.num_phones()]; // eos
    Ok(total)
}

/// log P_att(y | X) by teacher forcing, eos step included. `y` must be
/// non-empty; decode-internal paths score empty prefixes via
/// [`att_score`].
pub fn att_log_prob(
    params: &ModelParams,
    config: &ModelConfig,
    enc: &EncoderOutput,
    y: &PhoneSequence,
) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Contract(
            "att_log_prob requires a non-empty sequence".to_string(),
        ));
    }
    att_score(params, config, enc, y.ids())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::{FeatureMatrix, PhoneInventory, Role};
    use crate::model::encoder::encode;

    fn setup(
        num_phones: usize,
        t: usize,
    ) -> (ModelParams, ModelConfig, EncoderOutput) {
        let config = ModelConfig {
            encoder_hidden: 4,
            decoder_hidden: 4,
            attention_dim: 3,
            seed: 17,
            ..ModelConfig::new(3)
        };
        let params = ModelParams::init(&config, num_phones).unwrap();
        let data: Vec<f64> = (0..t * 3).map(|i| (i as f64 * 0.21).cos()).collect();
        let features = FeatureMatrix::new(t, 3, data).unwrap();
        let enc = encode(&params, &config, &features).unwrap();
        (params, config, enc)
    }

    #[test]
    fn single_frame_attention_is_one() {
        let (params, config, enc) = setup(2, 2); // stride 2 -> one encoder state
        assert_eq!(enc.len(), 1);
        let step =
            decoder_step(&params, &config, &enc, &DecoderState::initial(&config), None).unwrap();
        assert_eq!(step.attention, vec![1.0]);
    }

    #[test]
    fn zero_params_give_uniform_distribution() {
        let config = ModelConfig {
            encoder_hidden: 4,
            decoder_hidden: 4,
            attention_dim: 3,
            ..ModelConfig::new(3)
        };
        let params = ModelParams::zeros(&config, 3).unwrap();
        let features = FeatureMatrix::new(4, 3, vec![0.5; 12]).unwrap();
        let enc = encode(&params, &config, &features).unwrap();
        let step =
            decoder_step(&params, &config, &enc, &DecoderState::initial(&config), None).unwrap();
        let expected = (1.0f64 / 4.0).ln();
        for &lp in &step.log_probs {
            assert!((lp - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn repeated_calls_are_bit_identical() {
        let (params, config, enc) = setup(3, 6);
        let s = DecoderState::initial(&config);
        let a = decoder_step(&params, &config, &enc, &s, Some(1)).unwrap();
        let b = decoder_step(&params, &config, &enc, &s, Some(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_distributions_normalize() {
        let (params, config, enc) = setup(4, 7);
        let step =
            decoder_step(&params, &config, &enc, &DecoderState::initial(&config), Some(2)).unwrap();
        let p_sum: f64 = step.log_probs.iter().map(|v| v.exp()).sum();
        assert!((p_sum - 1.0).abs() < 1e-10);
        let a_sum: f64 = step.attention.iter().sum();
        assert!((a_sum - 1.0).abs() < 1e-10);
        assert!(step.attention.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn att_log_prob_is_chain_of_steps() {
        let (params, config, enc) = setup(3, 6);
        let y = PhoneSequence::from_ids_unchecked(vec![0, 2, 1], Role::Reference);
        let total = att_log_prob(&params, &config, &enc, &y).unwrap();
        // manual chain over decoder_step
        let mut state = DecoderState::initial(&config);
        let mut prev = None;
        let mut manual = 0.0;
        for &p in y.ids() {
            let step = decoder_step(&params, &config, &enc, &state, prev).unwrap();
            manual += step.log_probs[p];
            state = step.state;
            prev = Some(p);
        }
        let last = decoder_step(&params, &config, &enc, &state, prev).unwrap();
        manual += last.log_probs[3];
        assert_eq!(total, manual);
        assert!(total <= 0.0);
    }

    #[test]
    fn empty_sequence_is_contract_error() {
        let (params, config, enc) = setup(2, 4);
        let y = PhoneSequence::from_ids_unchecked(vec![], Role::Reference);
        assert!(matches!(
            att_log_prob(&params, &config, &enc, &y),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn smallest_decoder_run_two_way_softmax() {
        // vocab of 1 phone (+eos): log P(y) = log P(phone) + log P(eos).
        let inv = PhoneInventory::from_text("").unwrap(); // just unk
        assert_eq!(inv.num_phones(), 1);
        let (params, config, enc) = setup(1, 4);
        let y = PhoneSequence::from_ids_unchecked(vec![0], Role::Reference);
        let total = att_log_prob(&params, &config, &enc, &y).unwrap();
        let s0 = decoder_step(&params, &config, &enc, &DecoderState::initial(&config), None)
            .unwrap();
        assert_eq!(s0.log_probs.len(), 2);
        let s1 = decoder_step(&params, &config, &enc, &s0.state, Some(0)).unwrap();
        assert_eq!(total, s0.log_probs[0] + s1.log_probs[1]);
    }

    #[test]
    fn sequence_probabilities_sum_below_one() {
        // vocab 2: exhaustive over lengths <= 4; mass is monotone in the
        // length cap and bounded by 1.
        let (params, config, enc) = setup(2, 6);
        let mut mass_by_len = vec![0.0f64; 5];
        for len in 0..=4usize {
            for code in 0..(1usize << len) {
                let ids: Vec<usize> = (0..len).map(|i| (code >> i) & 1).collect();
                mass_by_len[len] += att_score(&params, &config, &enc, &ids).unwrap().exp();
            }
        }
        let upto2: f64 = mass_by_len[..3].iter().sum();
        let upto4: f64 = mass_by_len.iter().sum();
        assert!(upto2 <= 1.0 + 1e-12);
        assert!(upto4 <= 1.0 + 1e-12);
        assert!(upto4 > upto2);
    }
}
