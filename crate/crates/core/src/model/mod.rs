//! Bidirectional transformer scorer with hand-written gradients.
//!
//! Input at each position is the sum of song, station, feedback and
//! positional embeddings. A stack of pre-norm encoder layers with unmasked
//! self-attention produces contextual vectors; a song's score at a masked
//! slot is the dot product of that slot's vector with the song's embedding
//! row (the input table is reused for output).

mod checkpoint;
mod encoder;
mod loss;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::InputMode;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use encoder::{backward, forward, Forward, ScoreOutput};
pub use loss::{
    accumulate_example, bce_pair_grad, bce_pair_loss, example_gradients, example_loss, hardest_of_k, softplus,
    ExampleLoss,
};
pub use params::{LayerParams, Matrix, ModelParams};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Feed-forward width; 0 means `4 * d_model`.
    pub d_ff: usize,
    pub max_len: usize,
    pub catalog_size: usize,
    /// Number of non-null stations.
    pub station_count: usize,
    pub dropout: f64,
    pub init_std: f64,
    pub seed: u64,
    /// Add positional embeddings to the input.
    pub use_positional: bool,
    /// Add feedback-type embeddings to the input.
    pub use_feedback: bool,
    pub input_mode: InputMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_layers: 2,
            n_heads: 2,
            d_ff: 0,
            max_len: 400,
            catalog_size: 0,
            station_count: 0,
            dropout: 0.1,
            init_std: 0.1,
            seed: 0,
            use_positional: true,
            use_feedback: true,
            input_mode: InputMode::All,
        }
    }
}

impl ModelConfig {
    pub fn ff_dim(&self) -> usize {
        if self.d_ff == 0 {
            4 * self.d_model
        } else {
            self.d_ff
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 {
            return bad("d_model and n_heads must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.max_len == 0 {
            return bad("max_len must be positive".into());
        }
        if self.catalog_size < 2 {
            return bad("catalog must hold at least two songs".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Row of the mask token in the song table.
    pub fn mask_row(&self) -> usize {
        self.catalog_size
    }
}
