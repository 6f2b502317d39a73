//! Flat key-value run configuration (TOML) covering every module's knobs.
//! Command-line flags override individual keys after loading.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SplitConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::model::ModelConfig;
use crate::optim::AdamConfig;
use crate::sampling::{CascadeOptions, InputMode};
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    // Split.
    pub test_window_days: i64,
    pub val_frac: f64,
    pub max_len: usize,

    // Model.
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub init_std: f64,
    pub use_positional: bool,
    pub use_feedback: bool,
    pub input_mode: InputMode,

    // Training.
    pub p_task: f64,
    pub p_hard: f64,
    pub k_random: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub convergence_tolerance: f64,
    pub same_day_station_match: bool,
    pub future_station_match: bool,

    // Evaluation.
    pub pool_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let split = SplitConfig::default();
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            seed: 0,
            test_window_days: split.test_window / crate::data::SECONDS_PER_DAY,
            val_frac: split.val_frac,
            max_len: split.max_len,
            d_model: model.d_model,
            n_layers: model.n_layers,
            n_heads: model.n_heads,
            d_ff: model.d_ff,
            dropout: model.dropout,
            init_std: model.init_std,
            use_positional: model.use_positional,
            use_feedback: model.use_feedback,
            input_mode: model.input_mode,
            p_task: train.p_task,
            p_hard: train.p_hard,
            k_random: train.k_random,
            batch_size: train.batch_size,
            learning_rate: train.adam.learning_rate,
            beta1: train.adam.beta1,
            beta2: train.adam.beta2,
            adam_eps: train.adam.eps,
            max_epochs: train.max_epochs,
            patience: train.patience,
            convergence_tolerance: train.convergence_tolerance,
            same_day_station_match: train.cascade.same_day_station_match,
            future_station_match: train.cascade.future_station_match,
            pool_size: EvalConfig::default().pool_size,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn split(&self) -> SplitConfig {
        SplitConfig {
            test_window: self.test_window_days * crate::data::SECONDS_PER_DAY,
            val_frac: self.val_frac,
            seed: self.seed,
            max_len: self.max_len,
        }
    }

    /// Model config for a catalog of the given size. The model sees one
    /// more position than the split keeps, for the scoring slot.
    pub fn model(&self, catalog_size: usize, station_count: usize) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            max_len: self.max_len + 1,
            catalog_size,
            station_count,
            dropout: self.dropout,
            init_std: self.init_std,
            seed: self.seed,
            use_positional: self.use_positional,
            use_feedback: self.use_feedback,
            input_mode: self.input_mode,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            p_task: self.p_task,
            p_hard: self.p_hard,
            k_random: self.k_random,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            convergence_tolerance: self.convergence_tolerance,
            seed: self.seed,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
            },
            cascade: CascadeOptions {
                same_day_station_match: self.same_day_station_match,
                future_station_match: self.future_station_match,
            },
        }
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            pool_size: self.pool_size,
            seed: self.seed,
        }
    }
}
