//! Throughput of the data-parallel hot paths. With the default `parallel`
//! feature the same workloads run on a 1-thread pool and on the full
//! machine, so the rayon speedup is visible directly; building with
//! `--no-default-features` benches the plain sequential fallback.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use mdd_core::corpus::{generate, GenConfig};
use mdd_core::inventory::{PhoneInventory, Utterance};
use mdd_core::loss::{batch_grad, LossConfig};
use mdd_core::model::{ModelConfig, ModelParams};
use mdd_core::nbest::{decode_corpus, SearchConfig};

fn gen_config(n: usize) -> GenConfig {
    GenConfig {
        seed: 42,
        num_utterances: n,
        phones_per_utterance: (3, 6),
        feature_dim: 8,
        frames_per_phone: (3, 5),
        emission_noise: 0.4,
        p_sub: 0.1,
        p_del: 0.001,
        p_ins: 0.001,
        confusion_bias: Default::default(),
        id_prefix: "b".to_string(),
    }
}

struct Fixture {
    inv: PhoneInventory,
    corpus: Vec<Utterance>,
    model_config: ModelConfig,
    params: ModelParams,
    loss: LossConfig,
}

fn fixture(n: usize) -> Fixture {
    let inv = PhoneInventory::default_set();
    let corpus = generate(&gen_config(n), &inv).unwrap();
    let model_config = ModelConfig {
        seed: 7,
        ..ModelConfig::new(8)
    };
    let params = ModelParams::init(&model_config, inv.num_phones()).unwrap();
    let loss = LossConfig {
        alpha: 0.3,
        beta: 0.9,
        m_best: 4,
        beam_width: 8,
    };
    Fixture {
        inv,
        corpus,
        model_config,
        params,
        loss,
    }
}

fn bench_workloads(c: &mut Criterion, label: &str, run: &dyn Fn(&dyn Fn() -> usize) -> usize) {
    let fx = fixture(48);

    let mut group = c.benchmark_group(format!("generate/{label}"));
    group.sample_size(10);
    group.bench_function("500_utterances", |b| {
        b.iter_batched(
            || gen_config(500),
            |cfg| run(&|| generate(&cfg, &fx.inv).unwrap().len()),
            BatchSize::SmallInput,
        )
    });
    group.finish();

    let mut group = c.benchmark_group(format!("batch_grad/{label}"));
    group.sample_size(10);
    let batch: Vec<&Utterance> = fx.corpus.iter().take(32).collect();
    group.bench_function("32_utterances_expected_f1", |b| {
        b.iter(|| {
            run(&|| {
                batch_grad(&fx.params, &fx.model_config, &batch, &fx.loss)
                    .unwrap()
                    .0
                    .len()
            })
        })
    });
    group.finish();

    let mut group = c.benchmark_group(format!("decode/{label}"));
    group.sample_size(10);
    let search = SearchConfig {
        beam_width: 8,
        m_best: 4,
        max_len: usize::MAX,
        alpha: 0.3,
    };
    group.bench_function("48_utterances_beam_8", |b| {
        b.iter(|| {
            run(&|| {
                decode_corpus(&fx.params, &fx.model_config, &fx.corpus, &search)
                    .unwrap()
                    .len()
            })
        })
    });
    group.finish();
}

#[cfg(feature = "parallel")]
fn benches(c: &mut Criterion) {
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    bench_workloads(c, "threads_1", &|f| single.install(f));
    bench_workloads(c, "threads_all", &|f| f());
}

#[cfg(not(feature = "parallel"))]
fn benches(c: &mut Criterion) {
    bench_workloads(c, "sequential", &|f| f());
}

criterion_group!(parallel_vs_sequential, benches);
criterion_main!(parallel_vs_sequential);
