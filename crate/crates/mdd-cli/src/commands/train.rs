//! `mdd train`: one training stage, checkpoint in/out, per-epoch CSV log.

use std::path::PathBuf;

use clap::Args;
use mdd_core::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState};
use mdd_core::corpus::load_manifest;
use mdd_core::model::{ModelConfig, ModelParams};
use mdd_core::trainer::{epoch_log_csv, train_stage, Stage, TrainConfig};

use super::{PhonesArg, StageArg};
use crate::util::{load_config, load_inventory, write_file, CliError, CliResult};

#[derive(Args)]
pub struct TrainArgs {
    /// Training config (JSON). The stage inside it can be overridden.
    #[arg(long)]
    pub config: PathBuf,
    /// Stage override.
    #[arg(long, value_enum)]
    pub stage: Option<StageArg>,
    /// Training corpus manifest.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Dev corpus manifest for per-epoch metrics and best-checkpoint
    /// selection.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Input checkpoint. Required for finetune-l2 and mfc stages.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Output checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch CSV log path.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Model config (JSON); used when training from scratch.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub phones: PhonesArg,
    // per-key overrides
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub grad_clip_norm: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub m_best: Option<usize>,
    #[arg(long)]
    pub beam_width: Option<usize>,
}

fn apply_overrides(config: &mut TrainConfig, args: &TrainArgs) {
    if let Some(stage) = args.stage {
        config.stage = stage.into();
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.grad_clip_norm {
        config.grad_clip_norm = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.alpha {
        config.loss.alpha = v;
    }
    if let Some(v) = args.beta {
        config.loss.beta = v;
    }
    if let Some(v) = args.m_best {
        config.loss.m_best = v;
    }
    if let Some(v) = args.beam_width {
        config.loss.beam_width = v;
    }
}

pub fn run(args: TrainArgs) -> CliResult {
    let inventory = load_inventory(args.phones.phones.as_deref())?;
    let mut config: TrainConfig = load_config(&args.config)?;
    apply_overrides(&mut config, &args);

    if config.stage != Stage::PretrainL1 && args.init.is_none() {
        return Err(CliError::usage(format!(
            "stage {} continues training and requires --init <checkpoint>",
            config.stage
        )));
    }

    let (model_config, params) = match &args.init {
        Some(path) => {
            let ckpt = load_checkpoint(path, &inventory)?;
            (ckpt.model_config, ckpt.params)
        }
        None => {
            let model_path = args.model.as_ref().ok_or_else(|| {
                CliError::usage("training from scratch requires --model <model.json>")
            })?;
            let mut mc: ModelConfig = load_config(model_path)?;
            if let Some(seed) = args.seed {
                mc.seed = seed;
            }
            let params = ModelParams::init(&mc, inventory.num_phones())?;
            (mc, params)
        }
    };

    let train = load_manifest(&args.corpus, &inventory)?;
    let dev = args
        .dev
        .as_ref()
        .map(|p| load_manifest(p, &inventory))
        .transpose()?;

    let result = train_stage(params, &model_config, &train, dev.as_deref(), &config)?;

    let checkpoint = Checkpoint {
        model_config,
        inventory_fingerprint: inventory.fingerprint(),
        stage: config.stage,
        epoch: config.epochs,
        params: result.params,
        optimizer: Some(result.optimizer),
        rng: RngState::capture(&result.rng),
    };
    save_checkpoint(&args.out, &checkpoint)?;
    if let Some(log_path) = &args.log {
        write_file(log_path, &epoch_log_csv(&result.log))?;
    }
    let last = result.log.last();
    println!(
        "stage {} finished: {} epochs, final train loss {}",
        config.stage,
        result.log.len(),
        last.map_or("n/a".to_string(), |l| format!("{:.6}", l.train_loss)),
    );
    Ok(())
}
