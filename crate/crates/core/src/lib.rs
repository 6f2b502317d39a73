//! Next-song recommendation that uses real negative feedback (thumbs-down,
//! skips) both as model inputs and as hard negative training targets.
//!
//! The crate covers the whole pipeline: flat-file ingestion and the
//! time/user split ([`data`]), cloze example construction with the hard
//! negative cascade ([`sampling`]), a small bidirectional transformer scorer
//! with exact gradients ([`model`]), the epoch loop ([`training`]), paired
//! accuracy and related measurements ([`eval`]) and a synthetic corpus
//! generator with planted ground truth ([`synth`]).

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod optim;
pub mod rng;
pub mod sampling;
pub mod synth;
pub mod training;

pub use data::{
    Catalog, DatasetSplit, FeedbackEvent, FeedbackType, PairedTestCase, SongId, StationId, UserId, UserSequence,
};
pub use error::{Error, Result};
pub use model::{ModelConfig, ModelParams};
pub use sampling::{NegativeSource, SamplingConfig, TrainingExample};
pub use training::{TrainConfig, TrainReport};
