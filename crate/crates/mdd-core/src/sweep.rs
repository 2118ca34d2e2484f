//! Hyperparameter sweep over the expected-F1 stage: a grid of (M, beta)
//! cells per seed, each trained from a shared fine-tuned starting point
//! and scored on the dev set. Cell failures are recorded, not fatal.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::inventory::Utterance;
use crate::loss::LossConfig;
use crate::model::{ModelConfig, ModelParams};
use crate::parallel::par_map;
use crate::trainer::{evaluate_dev, train_stage, Stage, TrainConfig};

/// Grid spec: every (m, beta) pair runs once per seed on top of the fixed
/// base config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub m_values: Vec<usize>,
    pub beta_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub base: TrainConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m_values.is_empty() || self.beta_values.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("sweep grid must be non-empty".to_string()));
        }
        if self.m_values.iter().any(|&m| m < 1) {
            return Err(Error::Config("sweep M values must be >= 1".to_string()));
        }
        if self.beta_values.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::Config("sweep beta values must lie in [0, 1]".to_string()));
        }
        if self.base.stage != Stage::Mfc {
            return Err(Error::Config(
                "sweep base config must use the mfc stage".to_string(),
            ));
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(usize, f64, u64)> {
        let mut cells = Vec::new();
        for &m in &self.m_values {
            for &beta in &self.beta_values {
                for &seed in &self.seeds {
                    cells.push((m, beta, seed));
                }
            }
        }
        cells
    }
}

/// One grid cell's outcome.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub m: usize,
    pub beta: f64,
    pub seed: u64,
    pub per: Option<f64>,
    pub f1: Option<f64>,
    pub dar: Option<f64>,
    pub mean_utterance_f1: Option<f64>,
    pub error: Option<String>,
}

/// Runs the grid. Cells run independently (in parallel under the
/// `parallel` feature) and are returned in (m, beta, seed) order
/// regardless of completion order.
pub fn run_sweep(
    spec: &SweepSpec,
    model_config: &ModelConfig,
    init_params: &ModelParams,
    train: &[Utterance],
    dev: &[Utterance],
) -> Result<Vec<SweepCell>> {
    spec.validate()?;
    if dev.is_empty() {
        return Err(Error::Contract("sweep needs a non-empty dev set".to_string()));
    }
    let cells = spec.cells();
    let results = par_map(&cells, |&(m, beta, seed)| {
        let cfg = TrainConfig {
            stage: Stage::Mfc,
            seed,
            loss: LossConfig {
                m_best: m,
                beta,
                beam_width: spec.base.loss.beam_width.max(m),
                alpha: spec.base.loss.alpha,
            },
            ..spec.base.clone()
        };
        let run = || -> Result<SweepCell> {
            let result = train_stage(init_params.clone(), model_config, train, Some(dev), &cfg)?;
            let metrics = evaluate_dev(&result.params, model_config, dev, &cfg.loss)?;
            Ok(SweepCell {
                m,
                beta,
                seed,
                per: metrics.per,
                f1: metrics.f1,
                dar: metrics.dar,
                mean_utterance_f1: Some(metrics.mean_utterance_f1),
                error: None,
            })
        };
        run().unwrap_or_else(|e| SweepCell {
            m,
            beta,
            seed,
            per: None,
            f1: None,
            dar: None,
            mean_utterance_f1: None,
            error: Some(e.to_string()),
        })
    });
    Ok(results)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("NA".to_string(), |x| format!("{x:.6}"))
}

/// Sweep CSV: m, beta, seed, per, f1, dar, status.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::new();
    out.push_str("# format: mdd-sweep v1\n");
    out.push_str("m,beta,seed,per,f1,dar,status\n");
    for c in cells {
        let status = match &c.error {
            None => "ok".to_string(),
            Some(e) => format!("failed: {}", e.replace([',', '\n'], ";")),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{status}",
            c.m,
            c.beta,
            c.seed,
            fmt_opt(c.per),
            fmt_opt(c.f1),
            fmt_opt(c.dar),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> TrainConfig {
        TrainConfig {
            stage: Stage::Mfc,
            epochs: 1,
            batch_size: 4,
            learning_rate: 1e-4,
            grad_clip_norm: 5.0,
            loss: LossConfig::default(),
            seed: 0,
        }
    }

    #[test]
    fn spec_validation() {
        let spec = SweepSpec {
            m_values: vec![2, 4],
            beta_values: vec![0.0, 0.9],
            seeds: vec![1],
            base: base(),
        };
        spec.validate().unwrap();
        assert_eq!(spec.cells().len(), 4);

        let empty = SweepSpec {
            m_values: vec![],
            ..spec.clone()
        };
        assert!(empty.validate().is_err());
        let bad_beta = SweepSpec {
            beta_values: vec![1.5],
            ..spec.clone()
        };
        assert!(bad_beta.validate().is_err());
        let bad_stage = SweepSpec {
            base: TrainConfig {
                stage: Stage::FinetuneL2,
                ..base()
            },
            ..spec
        };
        assert!(bad_stage.validate().is_err());
    }

    #[test]
    fn csv_records_failures() {
        let cells = vec![SweepCell {
            m: 8,
            beta: 0.9,
            seed: 1,
            per: None,
            f1: None,
            dar: None,
            mean_utterance_f1: None,
            error: Some("boom, with commas".to_string()),
        }];
        let csv = sweep_csv(&cells);
        assert!(csv.starts_with("# format: mdd-sweep v1\n"));
        assert!(csv.contains("m,beta,seed,per,f1,dar,status"));
        assert!(csv.contains("failed: boom; with commas"));
    }
}
