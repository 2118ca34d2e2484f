//! Staged training: L1 pretrain (CE) -> L2 fine-tune (CE) -> expected-F1
//! stage, with an adaptive-moment optimizer, global-norm gradient
//! clipping, and per-epoch dev evaluation.
//!
//! Single-worker runs at a fixed seed are bit-reproducible; with the
//! `parallel` feature the per-utterance gradient map reduces in canonical
//! order, so results do not depend on worker count either.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::inventory::Utterance;
use crate::loss::{batch_grad, LossConfig};
use crate::metrics::{corpus_report, mdd_counts, utterance_f1};
use crate::model::{ModelConfig, ModelParams};
use crate::nbest::{decode_corpus, SearchConfig};

/// Training stages of the staged regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PretrainL1,
    FinetuneL2,
    Mfc,
}

impl Stage {
    pub fn is_ce(self) -> bool {
        matches!(self, Stage::PretrainL1 | Stage::FinetuneL2)
    }

    /// Stage-appropriate default learning rate: 1e-3 for the CE stages,
    /// 1e-4 for the expected-F1 stage (its loss lives in [-1, 0]).
    pub fn default_learning_rate(self) -> f64 {
        if self.is_ce() {
            1e-3
        } else {
            1e-4
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::PretrainL1 => write!(f, "pretrain_l1"),
            Stage::FinetuneL2 => write!(f, "finetune_l2"),
            Stage::Mfc => write!(f, "mfc"),
        }
    }
}

/// One stage's training settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default = "default_clip")]
    pub grad_clip_norm: f64,
    pub loss: LossConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_clip() -> f64 {
    5.0
}

impl TrainConfig {
    /// CE stages must run with beta = 0. The expected-F1 stage accepts any
    /// beta in [0, 1], including 0 so that sweep baselines and
    /// equivalence checks can share the code path.
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".to_string()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".to_string()));
        }
        if self.grad_clip_norm <= 0.0 {
            return Err(Error::Config("grad_clip_norm must be positive".to_string()));
        }
        if self.stage.is_ce() && self.loss.beta != 0.0 {
            return Err(Error::Config(format!(
                "stage {} is cross-entropy only; set beta = 0 (got {})",
                self.stage, self.loss.beta
            )));
        }
        Ok(())
    }
}

/// Adam state. Moment tensors follow the canonical parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape().to_vec()))
            .collect();
        Self {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &[Tensor], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((param, grad), (m, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let (pd, gd) = (param.data_mut(), grad.data());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gd[i];
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gd[i] * gd[i];
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Scales all gradients so the global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::sq_l2).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let factor = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale_assign(factor);
        }
    }
    norm
}

/// Dev-set metrics from top-1 decoding.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DevMetrics {
    pub per: Option<f64>,
    pub f1: Option<f64>,
    pub dar: Option<f64>,
    pub mean_utterance_f1: f64,
}

/// Decodes `dev` with the current params (top-1) and scores it.
pub fn evaluate_dev(
    params: &ModelParams,
    model_config: &ModelConfig,
    dev: &[Utterance],
    loss: &LossConfig,
) -> Result<DevMetrics> {
    if dev.is_empty() {
        return Ok(DevMetrics::default());
    }
    let search = SearchConfig {
        beam_width: loss.beam_width,
        m_best: 1,
        max_len: usize::MAX,
        alpha: loss.alpha,
    };
    let lists = decode_corpus(params, model_config, dev, &search)?;
    let mut triples = Vec::with_capacity(dev.len());
    let mut f1_sum = 0.0;
    for (utt, list) in dev.iter().zip(&lists) {
        let top = list
            .top()
            .ok_or_else(|| Error::Contract("decode produced no hypothesis".to_string()))?;
        let reference = utt.reference()?;
        f1_sum += utterance_f1(&mdd_counts(&utt.canonical, reference, &top.phones));
        triples.push((&utt.canonical, reference, &top.phones));
    }
    let report = corpus_report(&triples)?;
    Ok(DevMetrics {
        per: report.per,
        f1: report.f1,
        dar: report.dar,
        mean_utterance_f1: f1_sum / dev.len() as f64,
    })
}

/// One epoch record of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: Option<DevMetrics>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("NA".to_string(), |x| format!("{x:.6}"))
}

/// Per-epoch CSV: epoch, train_loss, dev_per, dev_f1, dev_dar.
pub fn epoch_log_csv(logs: &[EpochLog]) -> String {
    let mut out = String::new();
    out.push_str("# format: mdd-train-log v1\n");
    out.push_str("epoch,train_loss,dev_per,dev_f1,dev_dar\n");
    for l in logs {
        let (per, f1, dar) = match &l.dev {
            Some(d) => (fmt_opt(d.per), fmt_opt(d.f1), fmt_opt(d.dar)),
            None => ("NA".into(), "NA".into(), "NA".into()),
        };
        let _ = writeln!(out, "{},{:.8},{per},{f1},{dar}", l.epoch, l.train_loss);
    }
    out
}

/// Output of one training stage.
#[derive(Debug)]
pub struct StageResult {
    pub params: ModelParams,
    pub optimizer: AdamState,
    pub rng: ChaCha8Rng,
    pub log: Vec<EpochLog>,
}

/// Runs gradient descent for one stage. With a dev set, returns the best
/// checkpoint by dev PER (CE stages) or dev F1 (expected-F1 stage);
/// without one, the final parameters.
pub fn train_stage(
    params: ModelParams,
    model_config: &ModelConfig,
    train: &[Utterance],
    dev: Option<&[Utterance]>,
    config: &TrainConfig,
) -> Result<StageResult> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Contract("training corpus is empty".to_string()));
    }
    let mut params = params;
    let mut optimizer = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, ModelParams)> = None;

    for epoch in 0..config.epochs {
        // shuffle, then bucket by frame count (stable sort keeps the
        // shuffled order within each length)
        let mut order: Vec<usize> = (0..train.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        order.sort_by_key(|&i| train[i].features.frames());

        let mut loss_sum = 0.0;
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Utterance> = chunk.iter().map(|&i| &train[i]).collect();
            let (mut grads, batch_loss, _) =
                batch_grad(&params, model_config, &batch, &config.loss)?;
            let grad_norm = clip_global_norm(&mut grads, config.grad_clip_norm);
            if !batch_loss.is_finite() || !grad_norm.is_finite() {
                let utterances = batch
                    .iter()
                    .map(|u| u.id.as_str())
                    .collect::<Vec<_>>()
                    .join(", ");
                return Err(Error::Diverged {
                    batch_index,
                    utterances,
                });
            }
            optimizer.step(&mut params, &grads, config.learning_rate);
            loss_sum += batch_loss * batch.len() as f64;
        }

        let dev_metrics = match dev {
            Some(d) if !d.is_empty() => {
                let m = evaluate_dev(&params, model_config, d, &config.loss)?;
                // lower PER is better for CE stages; the expected-F1 stage
                // tracks the mean utterance F1 its objective averages
                let score = if config.stage.is_ce() {
                    -m.per.unwrap_or(f64::INFINITY)
                } else {
                    m.mean_utterance_f1
                };
                if best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((score, params.clone()));
                }
                Some(m)
            }
            _ => None,
        };
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            dev: dev_metrics,
        });
    }

    let final_params = match best {
        Some((_, p)) => p,
        None => params,
    };
    Ok(StageResult {
        params: final_params,
        optimizer,
        rng,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, GenConfig};
    use crate::inventory::PhoneInventory;

    fn tiny_corpus(n: usize, seed: u64) -> (Vec<Utterance>, PhoneInventory) {
        let inv = PhoneInventory::default_set();
        let config = GenConfig {
            seed,
            num_utterances: n,
            phones_per_utterance: (2, 4),
            feature_dim: 4,
            frames_per_phone: (2, 3),
            emission_noise: 0.1,
            p_sub: 0.1,
            p_del: 0.0,
            p_ins: 0.0,
            confusion_bias: Default::default(),
            id_prefix: "t".to_string(),
        };
        (generate(&config, &inv).unwrap(), inv)
    }

    fn tiny_model(inv: &PhoneInventory) -> (ModelConfig, ModelParams) {
        let config = ModelConfig {
            encoder_hidden: 8,
            decoder_hidden: 8,
            attention_dim: 8,
            seed: 1,
            ..ModelConfig::new(4)
        };
        let params = ModelParams::init(&config, inv.num_phones()).unwrap();
        (config, params)
    }

    fn ce_config(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            stage: Stage::FinetuneL2,
            epochs,
            batch_size: 4,
            learning_rate: 1e-3,
            grad_clip_norm: 5.0,
            loss: LossConfig {
                alpha: 0.3,
                beta: 0.0,
                m_best: 4,
                beam_width: 4,
            },
            seed,
        }
    }

    #[test]
    fn zero_epochs_returns_params_unchanged() {
        let (corpus, inv) = tiny_corpus(6, 0);
        let (config, params) = tiny_model(&inv);
        let result =
            train_stage(params.clone(), &config, &corpus, None, &ce_config(0, 7)).unwrap();
        assert_eq!(result.params, params);
        assert!(result.log.is_empty());
    }

    #[test]
    fn training_is_deterministic_at_fixed_seed() {
        let (corpus, inv) = tiny_corpus(8, 1);
        let (config, params) = tiny_model(&inv);
        let a = train_stage(params.clone(), &config, &corpus, None, &ce_config(2, 9)).unwrap();
        let b = train_stage(params, &config, &corpus, None, &ce_config(2, 9)).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn ce_stage_rejects_nonzero_beta() {
        let cfg = TrainConfig {
            loss: LossConfig {
                beta: 0.5,
                ..LossConfig::default()
            },
            ..ce_config(1, 0)
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        // the expected-F1 stage accepts beta = 0 (sweep baseline cells)
        let mfc0 = TrainConfig {
            stage: Stage::Mfc,
            ..ce_config(1, 0)
        };
        mfc0.validate().unwrap();
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut grads = vec![
            Tensor::vector(vec![3.0, 4.0]),
            Tensor::vector(vec![12.0]),
        ];
        // norm = sqrt(9 + 16 + 144) = 13
        let pre = clip_global_norm(&mut grads, 5.0);
        assert!((pre - 13.0).abs() < 1e-12);
        let post = grads.iter().map(Tensor::sq_l2).sum::<f64>().sqrt();
        assert!(post <= 5.0 + 1e-12);
        // under the cap: untouched
        let mut small = vec![Tensor::vector(vec![0.3])];
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small[0].data(), &[0.3]);
    }

    #[test]
    fn divergence_reports_the_batch() {
        let (corpus, inv) = tiny_corpus(4, 2);
        let (config, mut params) = tiny_model(&inv);
        // poison the CTC head so log-softmax produces inf - inf
        for v in params.ctc_w.data_mut() {
            *v = 1e308;
        }
        let err = train_stage(params, &config, &corpus, None, &ce_config(1, 0)).unwrap_err();
        match err {
            Error::Diverged { utterances, .. } => assert!(!utterances.is_empty()),
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn adam_moves_parameters() {
        let (corpus, inv) = tiny_corpus(6, 3);
        let (config, params) = tiny_model(&inv);
        let result =
            train_stage(params.clone(), &config, &corpus, None, &ce_config(1, 4)).unwrap();
        assert_ne!(result.params, params);
        assert!(result.log[0].train_loss.is_finite());
    }

    #[test]
    fn epoch_log_csv_format() {
        let logs = vec![EpochLog {
            epoch: 0,
            train_loss: 1.25,
            dev: Some(DevMetrics {
                per: Some(0.5),
                f1: None,
                dar: Some(1.0),
                mean_utterance_f1: 0.75,
            }),
        }];
        let csv = epoch_log_csv(&logs);
        assert!(csv.starts_with("# format: mdd-train-log v1\n"));
        assert!(csv.contains("epoch,train_loss,dev_per,dev_f1,dev_dar"));
        assert!(csv.contains("0,1.25000000,0.500000,NA,1.000000"));
    }
}
