//! Events, sequences, catalog interning, flat-file ingestion and the
//! time/user split used for training and paired evaluation.

mod catalog;
mod ingest;
mod pairs;
mod sequence;
mod split;

use serde::{Deserialize, Serialize};

pub use catalog::{Catalog, Interner};
pub use ingest::{ingest, ingest_reader, write_events, Column, DatasetDescriptor, Granularity, IngestReport};
pub use pairs::{
    make_paired_tests, make_validation_pairs, one_pair_per_user, pairs_from_windows, PairSet, PairedTestCase,
};
pub use sequence::{build_sequences, UserSequence};
pub use split::{split, DatasetSplit, EvalWindow, SplitConfig, UserSummary};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SongId(pub u32);

/// Station index. Row 0 is the null station used when a dataset (or a row)
/// carries no station information.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationId(pub u32);

impl StationId {
    pub const NULL: StationId = StationId(0);

    pub fn is_null(self) -> bool {
        self.0 == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackType {
    Up,
    Down,
    Skip,
    Play,
    /// Cloze slot marker. Never stored in data.
    Mask,
}

impl FeedbackType {
    /// The four types that can appear in ingested data, in embedding-row order.
    pub const STORED: [FeedbackType; 4] = [
        FeedbackType::Up,
        FeedbackType::Down,
        FeedbackType::Skip,
        FeedbackType::Play,
    ];

    /// Row in the feedback embedding table. `Mask` has no row of its own:
    /// masked slots carry the `Up` feedback type.
    pub fn row(self) -> usize {
        match self {
            FeedbackType::Up | FeedbackType::Mask => 0,
            FeedbackType::Down => 1,
            FeedbackType::Skip => 2,
            FeedbackType::Play => 3,
        }
    }

    pub fn is_negative(self) -> bool {
        matches!(self, FeedbackType::Down | FeedbackType::Skip)
    }

    /// Feedback that a positive-only model accepts as input.
    pub fn is_positive_input(self) -> bool {
        matches!(self, FeedbackType::Up | FeedbackType::Play)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackType::Up => "up",
            FeedbackType::Down => "down",
            FeedbackType::Skip => "skip",
            FeedbackType::Play => "play",
            FeedbackType::Mask => "mask",
        }
    }

    /// Parses a stored feedback label. Accepts the word forms and the
    /// `+`/`-`/`/` shorthand. `Mask` is rejected.
    pub fn parse(s: &str, plays_as_positive: bool) -> Option<FeedbackType> {
        let t = match s.trim().to_ascii_lowercase().as_str() {
            "up" | "+" | "like" | "thumbs_up" => FeedbackType::Up,
            "down" | "-" | "dislike" | "thumbs_down" => FeedbackType::Down,
            "skip" | "/" => FeedbackType::Skip,
            "play" => FeedbackType::Play,
            _ => return None,
        };
        Some(if plays_as_positive && t == FeedbackType::Play {
            FeedbackType::Up
        } else {
            t
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub user: UserId,
    pub song: SongId,
    pub station: StationId,
    pub feedback: FeedbackType,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
}

impl FeedbackEvent {
    /// UTC calendar day index.
    pub fn day(&self) -> i64 {
        self.timestamp.div_euclid(SECONDS_PER_DAY)
    }
}
