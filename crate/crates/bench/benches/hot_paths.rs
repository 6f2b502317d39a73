use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use negrec_bench::{model, world};
use negrec_core::data::make_paired_tests;
use negrec_core::eval::{mrr, paired_accuracy, ModelScorer};
use negrec_core::model::{accumulate_example, forward, ModelParams};
use negrec_core::rng::rng_for;
use negrec_core::sampling::{build_example, SamplingConfig};

fn sampling(c: &mut Criterion) {
    let (corpus, split) = world(2000);
    let songs = corpus.catalog.song_count();
    let mut g = c.benchmark_group("build_example");
    for (name, p_hard, k) in [("random_k1", 0.0, 1), ("random_k100", 0.0, 100), ("cascade", 1.0, 1)] {
        let cfg = SamplingConfig {
            p_hard,
            k_random: k,
            ..Default::default()
        };
        let mut rng = rng_for(1, &[]);
        g.bench_function(name, |b| {
            b.iter(|| {
                for seq in split.train.iter().take(100) {
                    black_box(build_example(seq, &cfg, songs, &mut rng).unwrap());
                }
            })
        });
    }
    g.finish();
}

fn model_passes(c: &mut Criterion) {
    let (corpus, split) = world(2000);
    let cfg = model(&corpus);
    let params = ModelParams::init(&cfg);
    let mut rng = rng_for(2, &[]);
    let seq = split.train.iter().max_by_key(|s| s.len()).unwrap();
    let ex = build_example(seq, &SamplingConfig::default(), cfg.catalog_size, &mut rng).unwrap();
    let mut g = c.benchmark_group("model");
    g.bench_function(format!("forward_len{}", ex.inputs.len()), |b| {
        b.iter(|| black_box(forward(&params, &ex.inputs, None).unwrap()))
    });
    g.bench_function(format!("forward_backward_len{}", ex.inputs.len()), |b| {
        b.iter_batched_ref(
            || params.zeros_like(),
            |grads| black_box(accumulate_example(&params, &ex, Some(&mut rng), grads).unwrap()),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let (corpus, split) = world(2000);
    let params = ModelParams::init(&model(&corpus));
    let cases = make_paired_tests(&split).cases;
    let scorer = ModelScorer::new(&params);
    let mut g = c.benchmark_group("evaluation");
    g.sample_size(10);
    g.bench_function(format!("paired_accuracy_{}_pairs", cases.len()), |b| {
        b.iter(|| black_box(paired_accuracy(&scorer, &cases).unwrap()))
    });
    g.bench_function("mrr_pool_1000", |b| {
        b.iter(|| black_box(mrr(&scorer, &cases, 1000, corpus.catalog.song_count(), 0).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, sampling, model_passes, evaluation);
criterion_main!(benches);
