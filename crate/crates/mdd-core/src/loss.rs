//! Training objectives: the CTC/attention cross-entropy combination, the
//! expected-F1 criterion over M-best lists, and their interpolation.
//!
//! The expected-F1 term treats each hypothesis's F-score as a constant;
//! gradients flow only through the softmax-normalized posterior over the
//! recomputed joint scores. The M-best list is regenerated from the
//! current parameters at every evaluation, then frozen for the gradient.

use crate::diff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::inventory::{PhoneId, Utterance};
use crate::metrics::{mdd_counts, utterance_f1};
use crate::model::{ModelConfig, ModelParams, TapedEncoding, TapedModel};
use crate::nbest::{beam_search, HypothesisList, SearchConfig};
use crate::parallel::par_map;

/// Loss configuration: `alpha` weights CTC against attention inside each
/// score; `beta` weights the expected-F1 term against cross-entropy;
/// `m_best`/`beam_width` shape the hypothesis lists.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub m_best: usize,
    pub beam_width: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.0,
            m_best: 8,
            beam_width: 16,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("alpha must lie in [0, 1]".to_string()));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config("beta must lie in [0, 1]".to_string()));
        }
        if self.m_best < 1 {
            return Err(Error::Config("m_best must be >= 1".to_string()));
        }
        if self.beam_width < self.m_best {
            return Err(Error::Config(format!(
                "beam_width {} must be >= m_best {}",
                self.beam_width, self.m_best
            )));
        }
        Ok(())
    }

    fn search(&self, max_len: usize) -> SearchConfig {
        SearchConfig {
            beam_width: self.beam_width,
            m_best: self.m_best,
            max_len,
            alpha: self.alpha,
        }
    }
}

/// Per-hypothesis diagnostics from one expected-F1 evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct HypDiagnostic {
    pub phones: Vec<PhoneId>,
    pub f_score: f64,
    pub posterior: f64,
    pub joint_score: f64,
}

/// Value-level result of one utterance loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub ce_loss: f64,
    /// None when beta = 0 (the term is skipped entirely).
    pub mfc_loss: Option<f64>,
    pub total: f64,
    pub hypotheses: Vec<HypDiagnostic>,
    /// The CE target was CTC-unreachable; the sentinel propagated into
    /// `ce_loss`.
    pub ctc_unreachable: bool,
}

/// Differentiable cross-entropy:
/// `-(alpha * log P_ctc(ref) + (1 - alpha) * log P_att(ref))`.
pub fn ce_loss_var(
    tm: &TapedModel,
    enc: &TapedEncoding,
    reference: &[PhoneId],
    alpha: f64,
) -> Result<Var> {
    let joint = tm.joint_score(enc, reference, alpha)?;
    Ok(tm.tape.scale(joint, -1.0))
}

/// Differentiable expected-F1 loss over a frozen hypothesis list:
/// `-sum_m F_m * softmax(joint)_m`, in [-1, 0].
pub fn mfc_loss_var(
    tm: &TapedModel,
    enc: &TapedEncoding,
    utterance: &Utterance,
    hyps: &HypothesisList,
    alpha: f64,
) -> Result<(Var, Vec<HypDiagnostic>)> {
    if hyps.is_empty() {
        return Err(Error::Contract(
            "expected-F1 loss needs a non-empty hypothesis list".to_string(),
        ));
    }
    let reference = utterance.reference()?;
    let tape = tm.tape;
    let f_scores: Vec<f64> = hyps
        .hypotheses()
        .iter()
        .map(|h| utterance_f1(&mdd_counts(&utterance.canonical, reference, &h.phones)))
        .collect();
    let mut lifted = Vec::with_capacity(hyps.len());
    for h in hyps.hypotheses() {
        let joint = tm.joint_score(enc, h.phones.ids(), alpha)?;
        lifted.push(tape.lift_scalar(joint));
    }
    let scores = tape.concat(&lifted, 0)?;
    let posterior = tape.softmax(scores, 0)?;
    let f_const = tape.constant(Tensor::vector(f_scores.clone()));
    let expected = tape.sum(tape.mul(f_const, posterior)?);
    let loss = tape.scale(expected, -1.0);

    let post_vals = tape.value(posterior);
    let score_vals = tape.value(scores);
    let diagnostics = hyps
        .hypotheses()
        .iter()
        .enumerate()
        .map(|(i, h)| HypDiagnostic {
            phones: h.phones.ids().to_vec(),
            f_score: f_scores[i],
            posterior: post_vals.data()[i],
            joint_score: score_vals.data()[i],
        })
        .collect();
    Ok((loss, diagnostics))
}

/// Builds the full per-utterance loss on `tape`. Runs beam search on the
/// value path first when `beta > 0`; endpoint betas take the exact
/// single-term path.
fn build_total_loss(
    tape: &Tape,
    params: &ModelParams,
    config: &ModelConfig,
    utterance: &Utterance,
    cfg: &LossConfig,
) -> Result<(Var, crate::model::ParamVars, LossBreakdown)> {
    cfg.validate()?;
    let reference = utterance.reference()?;

    let hyps = if cfg.beta > 0.0 {
        let enc = crate::model::encode(params, config, &utterance.features)?;
        let search = cfg.search(enc.len().max(1));
        Some(beam_search(params, config, &enc, &search)?)
    } else {
        None
    };

    let tm = TapedModel::new(tape, params, config);
    let enc_t = tm.encode(&utterance.features)?;

    let ce = ce_loss_var(&tm, &enc_t, reference.ids(), cfg.alpha)?;
    let ce_val = tape.value_item(ce);
    let ctc_unreachable = ce_val >= 1e29;

    let (total, mfc_val, diagnostics) = match &hyps {
        None => (ce, None, Vec::new()),
        Some(hyps) => {
            let (mfc, diags) = mfc_loss_var(&tm, &enc_t, utterance, hyps, cfg.alpha)?;
            let mfc_val = tape.value_item(mfc);
            let total = if cfg.beta == 1.0 {
                mfc
            } else {
                tape.add(tape.scale(mfc, cfg.beta), tape.scale(ce, 1.0 - cfg.beta))?
            };
            (total, Some(mfc_val), diags)
        }
    };

    let breakdown = LossBreakdown {
        ce_loss: ce_val,
        mfc_loss: mfc_val,
        total: tape.value_item(total),
        hypotheses: diagnostics,
        ctc_unreachable,
    };
    Ok((total, tm.vars, breakdown))
}

/// Cross-entropy value for one utterance.
pub fn ce_loss(
    params: &ModelParams,
    config: &ModelConfig,
    utterance: &Utterance,
    alpha: f64,
) -> Result<f64> {
    let tape = Tape::new();
    let tm = TapedModel::new(&tape, params, config);
    let enc = tm.encode(&utterance.features)?;
    let ce = ce_loss_var(&tm, &enc, utterance.reference()?.ids(), alpha)?;
    Ok(tape.value_item(ce))
}

/// Expected-F1 loss value for one utterance over a supplied list.
pub fn mfc_loss(
    params: &ModelParams,
    config: &ModelConfig,
    utterance: &Utterance,
    hyps: &HypothesisList,
    alpha: f64,
) -> Result<f64> {
    let tape = Tape::new();
    let tm = TapedModel::new(&tape, params, config);
    let enc = tm.encode(&utterance.features)?;
    let (loss, _) = mfc_loss_var(&tm, &enc, utterance, hyps, alpha)?;
    Ok(tape.value_item(loss))
}

/// Interpolated loss value (with diagnostics) for one utterance.
pub fn total_loss(
    params: &ModelParams,
    config: &ModelConfig,
    utterance: &Utterance,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let tape = Tape::new();
    let (_, _, breakdown) = build_total_loss(&tape, params, config, utterance, cfg)?;
    Ok(breakdown)
}

/// Loss and parameter gradients (canonical order) for one utterance.
pub fn utterance_grad(
    params: &ModelParams,
    config: &ModelConfig,
    utterance: &Utterance,
    cfg: &LossConfig,
) -> Result<(Vec<Tensor>, LossBreakdown)> {
    let tape = Tape::new();
    let (total, vars, breakdown) = build_total_loss(&tape, params, config, utterance, cfg)?;
    let grads = tape.backward(total)?;
    let out = vars
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| grads.wrt_or_zeros(v, t.shape()))
        .collect();
    Ok((out, breakdown))
}

/// Mean loss over a batch; summation order is canonicalized by utterance
/// id, so batch permutations change nothing.
pub fn batch_loss(
    params: &ModelParams,
    config: &ModelConfig,
    utterances: &[&Utterance],
    cfg: &LossConfig,
) -> Result<f64> {
    let (_, loss, _) = batch_grad_inner(params, config, utterances, cfg, false)?;
    Ok(loss)
}

/// Mean gradients and loss over a batch, id-canonical reduction order.
pub fn batch_grad(
    params: &ModelParams,
    config: &ModelConfig,
    utterances: &[&Utterance],
    cfg: &LossConfig,
) -> Result<(Vec<Tensor>, f64, Vec<LossBreakdown>)> {
    let (grads, loss, breakdowns) = batch_grad_inner(params, config, utterances, cfg, true)?;
    Ok((grads.expect("gradients requested"), loss, breakdowns))
}

#[allow(clippy::type_complexity)]
fn batch_grad_inner(
    params: &ModelParams,
    config: &ModelConfig,
    utterances: &[&Utterance],
    cfg: &LossConfig,
    with_grads: bool,
) -> Result<(Option<Vec<Tensor>>, f64, Vec<LossBreakdown>)> {
    if utterances.is_empty() {
        return Err(Error::Contract("empty batch".to_string()));
    }
    let mut order: Vec<usize> = (0..utterances.len()).collect();
    order.sort_by(|&a, &b| utterances[a].id.cmp(&utterances[b].id));

    let results = par_map(&order, |&idx| {
        let utt = utterances[idx];
        if with_grads {
            utterance_grad(params, config, utt, cfg).map(|(g, b)| (Some(g), b))
        } else {
            total_loss(params, config, utt, cfg).map(|b| (None, b))
        }
    });

    let n = utterances.len() as f64;
    let mut grads: Option<Vec<Tensor>> = None;
    let mut loss_sum = 0.0;
    let mut breakdowns = Vec::with_capacity(utterances.len());
    for r in results {
        let (g, b) = r?;
        loss_sum += b.total;
        if let Some(g) = g {
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => {
                    for (a, gi) in acc.iter_mut().zip(&g) {
                        a.add_assign(gi);
                    }
                }
            }
        }
        breakdowns.push(b);
    }
    if let Some(acc) = grads.as_mut() {
        for t in acc.iter_mut() {
            t.scale_assign(1.0 / n);
        }
    }
    Ok((grads, loss_sum / n, breakdowns))
}

/// Closed-form value of the expected-F1 loss given joint scores and
/// F-scores: `-sum_m F_m softmax(scores)_m`.
pub fn expected_f1_loss_value(joint_scores: &[f64], f_scores: &[f64]) -> f64 {
    debug_assert_eq!(joint_scores.len(), f_scores.len());
    let mut post = vec![0.0; joint_scores.len()];
    crate::diff::num::softmax_into(joint_scores, &mut post);
    -post.iter().zip(f_scores).map(|(p, f)| p * f).sum::<f64>()
}
