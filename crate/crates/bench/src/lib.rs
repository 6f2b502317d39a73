//! Shared fixtures for the benchmarks under `benches/`.

use negrec_core::data::{build_sequences, split, DatasetSplit, SplitConfig};
use negrec_core::model::ModelConfig;
use negrec_core::synth::{generate_corpus, SynthConfig, SynthCorpus};

pub const MAX_LEN: usize = 50;

/// A synthetic corpus of `users` listeners and its split.
pub fn world(users: usize) -> (SynthCorpus, DatasetSplit) {
    let corpus = generate_corpus(&SynthConfig {
        n_users: users,
        seed: 5,
        ..Default::default()
    })
    .expect("synth");
    let seqs = build_sequences(&corpus.events, MAX_LEN);
    let split = split(
        &seqs,
        &SplitConfig {
            max_len: MAX_LEN,
            seed: 5,
            ..Default::default()
        },
    )
    .expect("split");
    (corpus, split)
}

/// The model size used for the directional experiments.
pub fn model(corpus: &SynthCorpus) -> ModelConfig {
    ModelConfig {
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        max_len: MAX_LEN + 1,
        catalog_size: corpus.catalog.song_count(),
        station_count: corpus.catalog.station_count(),
        seed: 5,
        ..Default::default()
    }
}
