use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{FeedbackEvent, FeedbackType, UserId, UserSequence, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Length of the held-out test window, in seconds. The validation window
    /// has the same length and immediately precedes it.
    pub test_window: i64,
    pub val_frac: f64,
    pub seed: u64,
    pub max_len: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_window: 30 * SECONDS_PER_DAY,
            val_frac: 0.1,
            seed: 0,
            max_len: 400,
        }
    }
}

/// Inputs available before a held-out window plus the events inside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalWindow {
    pub user: UserId,
    pub context: UserSequence,
    pub events: Vec<FeedbackEvent>,
}

/// Feedback counts over a user's whole history.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSummary {
    pub user: UserId,
    pub up: usize,
    pub down: usize,
    pub skip: usize,
    pub play: usize,
}

impl UserSummary {
    pub fn total(&self) -> usize {
        self.up + self.down + self.skip + self.play
    }

    /// Share of the user's feedback that is positive (`up`).
    pub fn positive_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.up as f64 / self.total() as f64
        }
    }

    fn of(seq: &UserSequence) -> Self {
        let mut s = UserSummary {
            user: seq.user,
            ..Default::default()
        };
        for e in &seq.events {
            match e.feedback {
                FeedbackType::Up => s.up += 1,
                FeedbackType::Down => s.down += 1,
                FeedbackType::Skip => s.skip += 1,
                FeedbackType::Play => s.play += 1,
                FeedbackType::Mask => {}
            }
        }
        s
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub config: SplitConfig,
    /// Events with `timestamp <= cutoff` are available for training.
    pub cutoff: i64,
    pub validation_cutoff: i64,
    pub train: Vec<UserSequence>,
    pub validation: Vec<UserSequence>,
    /// Validation users' inputs before `validation_cutoff` and their events
    /// in `(validation_cutoff, cutoff]`.
    pub validation_windows: Vec<EvalWindow>,
    /// Every user's inputs up to `cutoff` and their events after it.
    pub test: Vec<EvalWindow>,
    /// Users with negative feedback but no `up` before the cutoff.
    pub inference_only: Vec<UserSequence>,
    pub users: Vec<UserSummary>,
    pub has_stations: bool,
}

/// Time-separates the final `test_window` for testing and splits the users
/// that have positive feedback before it 90/10 (by default) into training and
/// validation. Expects untruncated sequences; the configured `max_len` is
/// applied to every derived sequence.
pub fn split(sequences: &[UserSequence], config: &SplitConfig) -> Result<DatasetSplit> {
    if !(0.0..1.0).contains(&config.val_frac) {
        return Err(Error::Config(format!(
            "val_frac must be in [0, 1), got {}",
            config.val_frac
        )));
    }
    if config.test_window <= 0 || config.max_len == 0 {
        return Err(Error::Config("test_window and max_len must be positive".into()));
    }
    let all = sequences.iter().flat_map(|s| s.events.iter());
    let (lo, hi) = all.fold((i64::MAX, i64::MIN), |(lo, hi), e| {
        (lo.min(e.timestamp), hi.max(e.timestamp))
    });
    if lo > hi {
        return Err(Error::EmptyPartition("input"));
    }
    if hi - lo <= config.test_window {
        return Err(Error::Config(format!(
            "timestamps span {}s, which does not exceed the test window of {}s",
            hi - lo,
            config.test_window
        )));
    }
    let cutoff = hi - config.test_window;
    let validation_cutoff = cutoff - config.test_window;
    let max_len = config.max_len;
    let has_stations = sequences.iter().any(|s| s.events.iter().any(|e| !e.station.is_null()));

    let mut users = Vec::with_capacity(sequences.len());
    let mut test = Vec::new();
    let mut inference_only = Vec::new();
    let mut candidates = Vec::new();

    for seq in sequences {
        users.push(UserSummary::of(seq));
        let (pre, post): (Vec<_>, Vec<_>) = seq.events.iter().partition(|e| e.timestamp <= cutoff);
        let pre = UserSequence::new(seq.user, pre, usize::MAX);

        if !pre.is_empty() && !post.is_empty() {
            test.push(EvalWindow {
                user: seq.user,
                context: UserSequence::new(seq.user, pre.events.clone(), max_len),
                events: post,
            });
        }
        if pre.count(FeedbackType::Up) > 0 {
            candidates.push(pre);
        } else if pre.events.iter().any(|e| e.feedback.is_negative()) {
            inference_only.push(UserSequence::new(seq.user, pre.events, max_len));
        }
    }

    candidates.sort_by_key(|s| s.user);
    let mut rng = rng_for(config.seed, &[stream::SPLIT]);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.shuffle(&mut rng);
    // Floor, with a guard so that e.g. 100 * 0.1 is not rounded down to 9.
    let n_val = ((candidates.len() as f64) * config.val_frac + 1e-9).floor() as usize;
    let mut is_val = vec![false; candidates.len()];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut validation_windows = Vec::new();
    for (pre, val) in candidates.iter().zip(is_val) {
        let trimmed = pre.trimmed_to_last_up().expect("candidates have an up event");
        let seq = UserSequence::new(pre.user, trimmed.events, max_len);
        if val {
            let (ctx, win): (Vec<_>, Vec<_>) = pre.events.iter().partition(|e| e.timestamp <= validation_cutoff);
            if !ctx.is_empty() && !win.is_empty() {
                validation_windows.push(EvalWindow {
                    user: pre.user,
                    context: UserSequence::new(pre.user, ctx, max_len),
                    events: win,
                });
            }
            validation.push(seq);
        } else {
            train.push(seq);
        }
    }

    if train.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }
    if test.is_empty() {
        return Err(Error::EmptyPartition("test"));
    }

    Ok(DatasetSplit {
        config: config.clone(),
        cutoff,
        validation_cutoff,
        train,
        validation,
        validation_windows,
        test,
        inference_only,
        users,
        has_stations,
    })
}

impl DatasetSplit {
    /// Re-derives every sequence with a shorter `max_len`, keeping the most
    /// recent events. Larger values than the current one have no effect.
    pub fn with_max_len(&self, max_len: usize) -> DatasetSplit {
        let cut = |s: &UserSequence| {
            let keep = max_len.min(s.max_len);
            UserSequence::new(s.user, s.events.clone(), keep)
        };
        let cut_window = |w: &EvalWindow| EvalWindow {
            user: w.user,
            context: cut(&w.context),
            events: w.events.clone(),
        };
        DatasetSplit {
            config: SplitConfig {
                max_len: max_len.min(self.config.max_len),
                ..self.config.clone()
            },
            cutoff: self.cutoff,
            validation_cutoff: self.validation_cutoff,
            train: self.train.iter().map(cut).collect(),
            validation: self.validation.iter().map(cut).collect(),
            validation_windows: self.validation_windows.iter().map(cut_window).collect(),
            test: self.test.iter().map(cut_window).collect(),
            inference_only: self.inference_only.iter().map(cut).collect(),
            users: self.users.clone(),
            has_stations: self.has_stations,
        }
    }

    /// Longest sequence the model will see, including the appended slot used
    /// when scoring an evaluation context.
    pub fn longest_input(&self) -> usize {
        let train = self.train.iter().map(|s| s.len());
        let ctx = self
            .test
            .iter()
            .chain(&self.validation_windows)
            .map(|w| w.context.len() + 1);
        train.chain(ctx).max().unwrap_or(1)
    }
}
