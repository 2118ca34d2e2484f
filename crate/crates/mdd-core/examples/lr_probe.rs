// Scratch harness: dev-PER trajectory on a clean corpus at several
// learning rates.

use mdd_core::corpus::{generate, split, GenConfig};
use mdd_core::inventory::PhoneInventory;
use mdd_core::loss::LossConfig;
use mdd_core::model::{ModelConfig, ModelParams};
use mdd_core::trainer::{train_stage, Stage, TrainConfig};

fn main() {
    let inv = PhoneInventory::default_set();
    let config = GenConfig {
        seed: 31,
        num_utterances: 260,
        phones_per_utterance: (3, 6),
        feature_dim: 8,
        frames_per_phone: (3, 5),
        emission_noise: 0.0,
        p_sub: 0.0,
        p_del: 0.0,
        p_ins: 0.0,
        confusion_bias: Default::default(),
        id_prefix: "c".to_string(),
    };
    let corpus = generate(&config, &inv).unwrap();
    let (train, dev, _) = split(corpus, (0.85, 0.15, 0.0), 5).unwrap();
    let mc = ModelConfig {
        feature_dim: 8,
        seed: 1,
        ..ModelConfig::new(8)
    };
    for lr in [2e-3, 5e-3, 1e-2] {
        let params = ModelParams::init(&mc, inv.num_phones()).unwrap();
        let tc = TrainConfig {
            stage: Stage::FinetuneL2,
            epochs: 12,
            batch_size: 2,
            learning_rate: lr,
            grad_clip_norm: 5.0,
            loss: LossConfig {
                alpha: 0.3,
                beta: 0.0,
                m_best: 8,
                beam_width: 16,
            },
            seed: 7,
        };
        let r = train_stage(params, &mc, &train, Some(&dev), &tc).unwrap();
        let pers: Vec<String> = r
            .log
            .iter()
            .map(|l| format!("{:.3}", l.dev.as_ref().unwrap().per.unwrap()))
            .collect();
        println!("lr {lr}: per by epoch = {}", pers.join(" "));
    }
}
