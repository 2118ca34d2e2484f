// Scratch harness: overfit a handful of utterances and watch the loss,
// PER, and a sample decode per epoch.

use mdd_core::corpus::{generate, GenConfig};
use mdd_core::inventory::PhoneInventory;
use mdd_core::loss::LossConfig;
use mdd_core::model::{ModelConfig, ModelParams};
use mdd_core::nbest::{decode_corpus, SearchConfig};
use mdd_core::trainer::{evaluate_dev, train_stage, Stage, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let inv = PhoneInventory::default_set();
    let cfg = GenConfig {
        seed: 5,
        num_utterances: n,
        phones_per_utterance: (3, 5),
        feature_dim: 8,
        frames_per_phone: (2, 4),
        emission_noise: 0.0,
        p_sub: 0.0,
        p_del: 0.0,
        p_ins: 0.0,
        confusion_bias: Default::default(),
        id_prefix: "o".into(),
    };
    let utts = generate(&cfg, &inv).unwrap();
    let model_config = ModelConfig {
        feature_dim: 8,
        seed: 1,
        ..ModelConfig::new(8)
    };
    let mut params = ModelParams::init(&model_config, inv.num_phones()).unwrap();
    let loss_cfg = LossConfig {
        alpha: 0.3,
        beta: 0.0,
        m_best: 4,
        beam_width: 8,
    };
    let tc = TrainConfig {
        stage: Stage::FinetuneL2,
        epochs: 1,
        batch_size: 4,
        learning_rate: lr,
        grad_clip_norm: 5.0,
        loss: loss_cfg,
        seed: 3,
    };
    for epoch in 0..epochs {
        let r = train_stage(params, &model_config, &utts, None, &tc).unwrap();
        params = r.params;
        if epoch % 5 == 4 || epoch == 0 {
            let m = evaluate_dev(&params, &model_config, &utts, &loss_cfg).unwrap();
            let search = SearchConfig {
                beam_width: 8,
                m_best: 1,
                max_len: usize::MAX,
                alpha: 0.3,
            };
            let lists = decode_corpus(&params, &model_config, &utts[..1], &search).unwrap();
            println!(
                "epoch {epoch}: loss {:.4} per {:?} | ref {:?} hyp {:?}",
                r.log[0].train_loss,
                m.per,
                utts[0].reference.as_ref().unwrap().ids(),
                lists[0].top().unwrap().phones.ids(),
            );
        }
    }
}
