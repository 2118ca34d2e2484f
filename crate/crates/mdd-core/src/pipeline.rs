//! The three-stage training pipeline: CE pretrain on L1 speech, CE
//! fine-tune on L2 speech, then the expected-F1 stage on L2. Parameters
//! flow from stage to stage without reinitialization; every stage's
//! checkpoint can be persisted.

use std::path::{Path, PathBuf};

use crate::checkpoint::{save_checkpoint, Checkpoint, RngState};
use crate::error::{Error, Result};
use crate::inventory::{PhoneInventory, Utterance};
use crate::model::{ModelConfig, ModelParams};
use crate::trainer::{train_stage, EpochLog, Stage, TrainConfig};

/// Train/dev pair for one corpus.
#[derive(Clone, Copy)]
pub struct CorpusSplit<'a> {
    pub train: &'a [Utterance],
    pub dev: Option<&'a [Utterance]>,
}

/// Stage configs in pipeline order.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub mfc: TrainConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (cfg, want) in [
            (&self.pretrain, Stage::PretrainL1),
            (&self.finetune, Stage::FinetuneL2),
            (&self.mfc, Stage::Mfc),
        ] {
            cfg.validate()?;
            if cfg.stage != want {
                return Err(Error::Contract(format!(
                    "pipeline stages must be ordered pretrain -> finetune -> mfc (found {} where {want} belongs)",
                    cfg.stage
                )));
            }
        }
        Ok(())
    }
}

pub struct PipelineOutcome {
    pub final_params: ModelParams,
    pub stage_logs: Vec<(Stage, Vec<EpochLog>)>,
    /// Paths of the persisted per-stage checkpoints, when an output
    /// directory was given.
    pub checkpoints: Vec<PathBuf>,
}

/// Runs the full staged pipeline from fresh parameters.
pub fn run_pipeline(
    inventory: &PhoneInventory,
    model_config: &ModelConfig,
    l1: CorpusSplit<'_>,
    l2: CorpusSplit<'_>,
    configs: &PipelineConfig,
    out_dir: Option<&Path>,
) -> Result<PipelineOutcome> {
    configs.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut params = ModelParams::init(model_config, inventory.num_phones())?;
    let mut stage_logs = Vec::with_capacity(3);
    let mut checkpoints = Vec::new();

    let stages: [(&TrainConfig, CorpusSplit, &str); 3] = [
        (&configs.pretrain, l1, "stage1_pretrain.ckpt"),
        (&configs.finetune, l2, "stage2_finetune.ckpt"),
        (&configs.mfc, l2, "stage3_mfc.ckpt"),
    ];
    for (cfg, corpus, filename) in stages {
        let result = train_stage(params, model_config, corpus.train, corpus.dev, cfg)?;
        params = result.params;
        if let Some(dir) = out_dir {
            let path = dir.join(filename);
            let ckpt = Checkpoint {
                model_config: *model_config,
                inventory_fingerprint: inventory.fingerprint(),
                stage: cfg.stage,
                epoch: cfg.epochs,
                params: params.clone(),
                optimizer: Some(result.optimizer),
                rng: RngState::capture(&result.rng),
            };
            save_checkpoint(&path, &ckpt)?;
            checkpoints.push(path);
        }
        stage_logs.push((cfg.stage, result.log));
    }

    Ok(PipelineOutcome {
        final_params: params,
        stage_logs,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossConfig;

    fn cfg(stage: Stage) -> TrainConfig {
        TrainConfig {
            stage,
            epochs: 0,
            batch_size: 4,
            learning_rate: 1e-3,
            grad_clip_norm: 5.0,
            loss: LossConfig {
                beta: if stage == Stage::Mfc { 0.9 } else { 0.0 },
                ..LossConfig::default()
            },
            seed: 0,
        }
    }

    #[test]
    fn stage_order_is_enforced() {
        let good = PipelineConfig {
            pretrain: cfg(Stage::PretrainL1),
            finetune: cfg(Stage::FinetuneL2),
            mfc: cfg(Stage::Mfc),
        };
        good.validate().unwrap();
        let bad = PipelineConfig {
            pretrain: cfg(Stage::FinetuneL2),
            finetune: cfg(Stage::PretrainL1),
            mfc: cfg(Stage::Mfc),
        };
        assert!(matches!(bad.validate(), Err(Error::Contract(_))));
    }
}
