use crate::data::{SongId, StationId, UserSequence};
use crate::error::Result;
use crate::model::{forward, ModelParams};
use crate::rng::{derive_seed, stream};
use crate::sampling::inference_input;

/// Anything that scores catalog songs for a user context on a station.
/// `prepare` does the per-context work once; `score` is called per song.
pub trait Scorer: Sync {
    type Query: Send + Sync;

    fn prepare(&self, context: &UserSequence, station: StationId) -> Result<Self::Query>;

    fn score(&self, query: &Self::Query, song: SongId) -> f64;
}

/// Scores with the trained network: the context plus a masked slot on the
/// requested station, dot product with the song table.
pub struct ModelScorer<'a> {
    pub params: &'a ModelParams,
}

impl<'a> ModelScorer<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        ModelScorer { params }
    }
}

impl Scorer for ModelScorer<'_> {
    type Query = Vec<f64>;

    fn prepare(&self, context: &UserSequence, station: StationId) -> Result<Vec<f64>> {
        let c = &self.params.config;
        let inputs = inference_input(context, station, c.input_mode, c.max_len);
        let fwd = forward(self.params, &inputs, None)?;
        Ok(fwd.contextual(inputs.len() - 1).to_vec())
    }

    fn score(&self, query: &Vec<f64>, song: SongId) -> f64 {
        query
            .iter()
            .zip(self.params.song.row(song.0 as usize))
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Pseudo-random but deterministic scores in `[0, 1)`, independent of the
/// context contents.
pub struct RandomScorer {
    pub seed: u64,
}

impl Scorer for RandomScorer {
    type Query = u64;

    fn prepare(&self, context: &UserSequence, station: StationId) -> Result<u64> {
        Ok(derive_seed(
            self.seed,
            &[stream::RANDOM_SCORER, context.user.0 as u64, station.0 as u64],
        ))
    }

    fn score(&self, query: &u64, song: SongId) -> f64 {
        (derive_seed(*query, &[song.0 as u64]) >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Gives every song the same score.
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    type Query = ();

    fn prepare(&self, _: &UserSequence, _: StationId) -> Result<()> {
        Ok(())
    }

    fn score(&self, _: &(), _: SongId) -> f64 {
        self.0
    }
}
