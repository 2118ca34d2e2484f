// Scratch harness: run the staged pipeline on synthetic presets and print
// baseline vs expected-F1-stage metrics for a few seeds.

use mdd_core::corpus::{generate, split, GenConfig};
use mdd_core::inventory::PhoneInventory;
use mdd_core::loss::LossConfig;
use mdd_core::metrics::{mdd_counts, utterance_f1};
use mdd_core::model::{ModelConfig, ModelParams};
use mdd_core::nbest::{decode_corpus, SearchConfig};
use mdd_core::trainer::{train_stage, Stage, TrainConfig};
use mdd_core::Utterance;

fn mean_utt_f1(
    params: &ModelParams,
    config: &ModelConfig,
    utts: &[Utterance],
    alpha: f64,
) -> (f64, f64) {
    let search = SearchConfig {
        beam_width: 16,
        m_best: 1,
        max_len: usize::MAX,
        alpha,
    };
    let lists = decode_corpus(params, config, utts, &search).unwrap();
    let mut f1_sum = 0.0;
    let mut errs = 0u64;
    let mut reflen = 0u64;
    for (u, l) in utts.iter().zip(&lists) {
        let top = l.top().unwrap();
        let c = mdd_counts(&u.canonical, u.reference.as_ref().unwrap(), &top.phones);
        f1_sum += utterance_f1(&c);
        errs += c.ref_hyp_subs + c.ref_hyp_dels + c.ref_hyp_ins;
        reflen += c.reference_len;
    }
    (f1_sum / utts.len() as f64, errs as f64 / reflen as f64)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let noise: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.6);
    let l1_n: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(800);
    let l2_n: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let ce_epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(4);
    let mfc_epochs: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(3);

    let inv = PhoneInventory::default_set();
    let mut bias = std::collections::BTreeMap::new();
    for (a, b) in [("z", "s"), ("dh", "d"), ("ih", "iy"), ("d", "sil"), ("er", "ah")] {
        bias.insert(a.to_string(), b.to_string());
    }
    let l1_cfg = GenConfig {
        seed: 101,
        num_utterances: l1_n,
        phones_per_utterance: (3, 8),
        feature_dim: 8,
        frames_per_phone: (3, 6),
        emission_noise: noise,
        p_sub: 0.0,
        p_del: 0.0,
        p_ins: 0.0,
        confusion_bias: Default::default(),
        id_prefix: "l1-".into(),
    };
    let l2_cfg = GenConfig {
        seed: 202,
        num_utterances: l2_n,
        p_sub: 0.10,
        p_del: 0.001,
        p_ins: 0.001,
        confusion_bias: bias,
        id_prefix: "l2-".into(),
        ..l1_cfg.clone()
    };
    let t0 = std::time::Instant::now();
    let l1 = generate(&l1_cfg, &inv).unwrap();
    let l2 = generate(&l2_cfg, &inv).unwrap();
    let (l1_train, l1_dev, _) = split(l1, (0.85, 0.15, 0.0), 11).unwrap();
    let (l2_train, l2_dev, l2_test) = split(l2, (0.7, 0.15, 0.15), 22).unwrap();
    println!(
        "gen: {:?}  l1 {} l2 {} test {}",
        t0.elapsed(),
        l1_train.len(),
        l2_train.len(),
        l2_test.len()
    );

    for seed in [1u64, 2, 3] {
        let t = std::time::Instant::now();
        let model_config = ModelConfig {
            feature_dim: 8,
            seed,
            ..ModelConfig::new(8)
        };
        let params = ModelParams::init(&model_config, inv.num_phones()).unwrap();
        let ce_loss_cfg = LossConfig {
            alpha: 0.3,
            beta: 0.0,
            m_best: 8,
            beam_width: 16,
        };
        let pre = TrainConfig {
            stage: Stage::PretrainL1,
            epochs: ce_epochs,
            batch_size: 8,
            learning_rate: 1e-3,
            grad_clip_norm: 5.0,
            loss: ce_loss_cfg,
            seed,
        };
        let r1 = train_stage(params, &model_config, &l1_train, Some(&l1_dev), &pre).unwrap();
        let fin = TrainConfig {
            stage: Stage::FinetuneL2,
            ..pre.clone()
        };
        let r2 = train_stage(r1.params, &model_config, &l2_train, Some(&l2_dev), &fin).unwrap();
        if seed == 1 {
            for l in &r2.log {
                println!(
                    "  finetune epoch {}: loss {:.3} dev per {:?} f1 {:?}",
                    l.epoch,
                    l.train_loss,
                    l.dev.as_ref().and_then(|d| d.per),
                    l.dev.as_ref().and_then(|d| d.f1)
                );
            }
        }
        let (base_f1, base_per) = mean_utt_f1(&r2.params, &model_config, &l2_test, 0.3);

        let mfc = TrainConfig {
            stage: Stage::Mfc,
            epochs: mfc_epochs,
            learning_rate: 1e-4,
            loss: LossConfig {
                beta: 0.9,
                ..ce_loss_cfg
            },
            ..pre.clone()
        };
        let r3 =
            train_stage(r2.params.clone(), &model_config, &l2_train, Some(&l2_dev), &mfc).unwrap();
        if seed == 1 {
            for l in &r3.log {
                println!(
                    "  mfc epoch {}: loss {:.4} dev per {:?} mean-utt-f1 {:?}",
                    l.epoch,
                    l.train_loss,
                    l.dev.as_ref().and_then(|d| d.per),
                    l.dev.as_ref().map(|d| d.mean_utterance_f1)
                );
            }
        }
        let (mfc_f1, mfc_per) = mean_utt_f1(&r3.params, &model_config, &l2_test, 0.3);
        println!(
            "seed {seed}: baseline f1 {base_f1:.4} per {base_per:.4} | mfc f1 {mfc_f1:.4} per {mfc_per:.4} | delta {:+.4} | {:?}",
            mfc_f1 - base_f1,
            t.elapsed()
        );
    }
}
