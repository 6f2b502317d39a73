//! Turning sequences into cloze training examples.
//!
//! Each epoch an example is rebuilt from scratch: `up` positions are masked
//! (the final one always), each masked slot is independently flagged to use a
//! hard negative, flagged slots walk the negative cascade and the rest get
//! random catalog songs. Negative events consumed by the cascade are removed
//! from the model input.

use std::io::Write;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeedbackEvent, FeedbackType, SongId, StationId, UserSequence};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MaskPlan {
    /// Ascending sequence indices of masked `up` events.
    pub masked_positions: Vec<usize>,
    /// Whether the last index was masked because it is last.
    pub forced_final: bool,
}

/// Masks the final event and every other `up` independently with
/// probability `p_task`.
pub fn plan_masks<R: Rng + ?Sized>(seq: &UserSequence, p_task: f64, rng: &mut R) -> MaskPlan {
    let n = seq.len();
    let mut plan = MaskPlan::default();
    for (i, e) in seq.events.iter().enumerate().take(n.saturating_sub(1)) {
        if e.feedback == FeedbackType::Up && rng.random::<f64>() < p_task {
            plan.masked_positions.push(i);
        }
    }
    if seq.ends_with_up() {
        plan.masked_positions.push(n - 1);
        plan.forced_final = true;
    }
    plan
}

/// Where a slot's negative came from, in cascade priority order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NegativeSource {
    SameDayDown,
    SameDaySkip,
    FutureDown,
    FutureSkip,
    Random,
}

impl NegativeSource {
    pub const ALL: [NegativeSource; 5] = [
        NegativeSource::SameDayDown,
        NegativeSource::SameDaySkip,
        NegativeSource::FutureDown,
        NegativeSource::FutureSkip,
        NegativeSource::Random,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NegativeSource::SameDayDown => "same_day_down",
            NegativeSource::SameDaySkip => "same_day_skip",
            NegativeSource::FutureDown => "future_down",
            NegativeSource::FutureSkip => "future_skip",
            NegativeSource::Random => "random",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeOptions {
    /// Same-day candidates must share the masked slot's station.
    pub same_day_station_match: bool,
    /// Future candidates must share the masked slot's station.
    pub future_station_match: bool,
}

impl Default for CascadeOptions {
    fn default() -> Self {
        CascadeOptions {
            same_day_station_match: true,
            future_station_match: false,
        }
    }
}

/// Cascade category of event `j` relative to the masked event, or `None`
/// when it is not a usable negative. Consumption is checked by the caller.
pub fn cascade_category(
    masked: &FeedbackEvent,
    candidate: &FeedbackEvent,
    opts: &CascadeOptions,
) -> Option<NegativeSource> {
    if !candidate.feedback.is_negative() || candidate.song == masked.song {
        return None;
    }
    let is_down = candidate.feedback == FeedbackType::Down;
    let same_station = candidate.station == masked.station;
    if candidate.day() == masked.day() && (same_station || !opts.same_day_station_match) {
        return Some(if is_down {
            NegativeSource::SameDayDown
        } else {
            NegativeSource::SameDaySkip
        });
    }
    if candidate.timestamp > masked.timestamp && (same_station || !opts.future_station_match) {
        return Some(if is_down {
            NegativeSource::FutureDown
        } else {
            NegativeSource::FutureSkip
        });
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HardNegative {
    pub song: SongId,
    pub source: NegativeSource,
    /// Index of the consumed event, `None` for random songs.
    pub event_index: Option<usize>,
}

/// Picks a negative for the masked `up` at `masked_idx`: uniformly from the
/// first non-empty cascade category, skipping events already consumed by an
/// earlier slot, else a uniform catalog song other than the positive.
pub fn select_hard_negative<R: Rng + ?Sized>(
    seq: &UserSequence,
    masked_idx: usize,
    consumed: &[bool],
    opts: &CascadeOptions,
    catalog_size: usize,
    rng: &mut R,
) -> HardNegative {
    let masked = &seq.events[masked_idx];
    let category = |j: usize| -> Option<NegativeSource> {
        if j == masked_idx || consumed.get(j).copied().unwrap_or(false) {
            return None;
        }
        cascade_category(masked, &seq.events[j], opts)
    };

    let mut counts = [0usize; 4];
    for j in 0..seq.len() {
        if let Some(c) = category(j) {
            counts[c.index()] += 1;
        }
    }
    if let Some(c) = counts.iter().position(|&n| n > 0) {
        let mut pick = rng.random_range(0..counts[c]);
        for j in 0..seq.len() {
            if category(j).map(NegativeSource::index) == Some(c) {
                if pick == 0 {
                    return HardNegative {
                        song: seq.events[j].song,
                        source: NegativeSource::ALL[c],
                        event_index: Some(j),
                    };
                }
                pick -= 1;
            }
        }
        unreachable!("category count and scan disagree");
    }
    HardNegative {
        song: random_other_song(masked.song, catalog_size, rng),
        source: NegativeSource::Random,
        event_index: None,
    }
}

fn random_other_song<R: Rng + ?Sized>(positive: SongId, catalog_size: usize, rng: &mut R) -> SongId {
    debug_assert!(catalog_size >= 2);
    let r = rng.random_range(0..catalog_size as u32 - 1);
    SongId(if r >= positive.0 { r + 1 } else { r })
}

/// Per-slot hard-negative flags, drawn independently with probability
/// `p_hard`.
pub fn apply_p_hard<R: Rng + ?Sized>(plan: &MaskPlan, p_hard: f64, rng: &mut R) -> Vec<bool> {
    plan.masked_positions
        .iter()
        .map(|_| rng.random::<f64>() < p_hard)
        .collect()
}

/// `k` distinct songs drawn uniformly without replacement, never the
/// positive.
pub fn sample_k_random_negatives<R: Rng + ?Sized>(
    positive: SongId,
    k: usize,
    catalog_size: usize,
    rng: &mut R,
) -> Result<Vec<SongId>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if catalog_size <= k {
        return Err(Error::CatalogTooSmall {
            needed: k,
            available: catalog_size,
        });
    }
    if k == 1 {
        return Ok(vec![random_other_song(positive, catalog_size, rng)]);
    }
    Ok(index::sample(rng, catalog_size - 1, k)
        .into_iter()
        .map(|r| {
            let r = r as u32;
            SongId(if r >= positive.0 { r + 1 } else { r })
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// All feedback types are model inputs.
    #[default]
    All,
    /// Only `up`/`play` events are inputs.
    PositiveOnly,
}

impl InputMode {
    pub fn accepts(self, f: FeedbackType) -> bool {
        match self {
            InputMode::All => f != FeedbackType::Mask,
            InputMode::PositiveOnly => f.is_positive_input(),
        }
    }
}

/// One model input position. `song == None` is the mask token.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputToken {
    pub song: Option<SongId>,
    pub station: StationId,
    pub feedback: FeedbackType,
    /// Recency index: 0 for the most recent input.
    pub position: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedSlot {
    /// Index into `TrainingExample::inputs`.
    pub input_index: usize,
    /// Index of the masked event in the source sequence.
    pub event_index: usize,
    pub positive: SongId,
    /// One hard negative, or `k` random candidates of which the
    /// highest-scoring is used.
    pub negatives: Vec<SongId>,
    pub source: NegativeSource,
    /// Sequence index of the negative event this slot consumed.
    pub consumed_event: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainingExample {
    pub inputs: Vec<InputToken>,
    pub slots: Vec<MaskedSlot>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotNegatives {
    pub negatives: Vec<SongId>,
    pub source: NegativeSource,
    pub consumed_event: Option<usize>,
}

/// Builds model inputs: consumed negatives are dropped, masked slots become
/// the mask token with the event's station and `up` feedback, and positions
/// are renumbered after removal.
pub fn assemble_example(
    seq: &UserSequence,
    plan: &MaskPlan,
    negatives: &[SlotNegatives],
    mode: InputMode,
) -> TrainingExample {
    assert_eq!(plan.masked_positions.len(), negatives.len());
    let n = seq.len();
    let mut removed = vec![false; n];
    for c in negatives.iter().filter_map(|s| s.consumed_event) {
        removed[c] = true;
    }
    let mut slot_of = vec![None; n];
    for (s, &i) in plan.masked_positions.iter().enumerate() {
        slot_of[i] = Some(s);
    }

    let mut inputs = Vec::with_capacity(n);
    let mut input_index = vec![0; negatives.len()];
    for (i, e) in seq.events.iter().enumerate() {
        if removed[i] {
            continue;
        }
        if let Some(s) = slot_of[i] {
            input_index[s] = inputs.len();
            inputs.push(InputToken {
                song: None,
                station: e.station,
                feedback: FeedbackType::Up,
                position: 0,
            });
        } else if mode.accepts(e.feedback) {
            inputs.push(InputToken {
                song: Some(e.song),
                station: e.station,
                feedback: e.feedback,
                position: 0,
            });
        }
    }
    let len = inputs.len();
    for (k, t) in inputs.iter_mut().enumerate() {
        t.position = len - 1 - k;
    }

    let slots = plan
        .masked_positions
        .iter()
        .zip(negatives)
        .zip(input_index)
        .map(|((&i, neg), input_index)| MaskedSlot {
            input_index,
            event_index: i,
            positive: seq.events[i].song,
            negatives: neg.negatives.clone(),
            source: neg.source,
            consumed_event: neg.consumed_event,
        })
        .collect();
    TrainingExample { inputs, slots }
}

/// Model input for scoring songs after `context` on `station`: the accepted
/// context events (most recent `max_len - 1`) followed by one masked slot.
pub fn inference_input(context: &UserSequence, station: StationId, mode: InputMode, max_len: usize) -> Vec<InputToken> {
    let accepted: Vec<_> = context.events.iter().filter(|e| mode.accepts(e.feedback)).collect();
    let keep = max_len.saturating_sub(1);
    let start = accepted.len().saturating_sub(keep);
    let len = accepted.len() - start + 1;
    let mut inputs: Vec<InputToken> = accepted[start..]
        .iter()
        .enumerate()
        .map(|(k, e)| InputToken {
            song: Some(e.song),
            station: e.station,
            feedback: e.feedback,
            position: len - 1 - k,
        })
        .collect();
    inputs.push(InputToken {
        song: None,
        station,
        feedback: FeedbackType::Up,
        position: 0,
    });
    inputs
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub p_task: f64,
    pub p_hard: f64,
    pub k_random: usize,
    pub input_mode: InputMode,
    pub cascade: CascadeOptions,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            p_task: 0.15,
            p_hard: 0.0,
            k_random: 1,
            input_mode: InputMode::All,
            cascade: CascadeOptions::default(),
        }
    }
}

/// Full per-epoch example construction for one sequence. Slots are resolved
/// in time order so that, when two slots would pick the same negative event,
/// the later one falls through the cascade.
pub fn build_example<R: Rng + ?Sized>(
    seq: &UserSequence,
    cfg: &SamplingConfig,
    catalog_size: usize,
    rng: &mut R,
) -> Result<TrainingExample> {
    let plan = plan_masks(seq, cfg.p_task, rng);
    let flags = apply_p_hard(&plan, cfg.p_hard, rng);
    let mut consumed = vec![false; seq.len()];
    let mut negatives = Vec::with_capacity(flags.len());
    for (&idx, hard) in plan.masked_positions.iter().zip(flags) {
        if hard {
            let h = select_hard_negative(seq, idx, &consumed, &cfg.cascade, catalog_size, rng);
            if let Some(j) = h.event_index {
                consumed[j] = true;
            }
            negatives.push(SlotNegatives {
                negatives: vec![h.song],
                source: h.source,
                consumed_event: h.event_index,
            });
        } else {
            let positive = seq.events[idx].song;
            negatives.push(SlotNegatives {
                negatives: sample_k_random_negatives(positive, cfg.k_random, catalog_size, rng)?,
                source: NegativeSource::Random,
                consumed_event: None,
            });
        }
    }
    Ok(assemble_example(seq, &plan, &negatives, cfg.input_mode))
}

/// Writes `event_index,source,negative` rows for every slot (negative-source
/// by position report).
pub fn write_negative_dump<W: Write>(mut out: W, examples: &[TrainingExample]) -> std::io::Result<()> {
    writeln!(out, "event_index,source,negative")?;
    for ex in examples {
        for s in &ex.slots {
            let neg = s.negatives.first().map(|n| n.0 as i64).unwrap_or(-1);
            writeln!(out, "{},{},{}", s.event_index, s.source.as_str(), neg)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{UserId, SECONDS_PER_DAY};
    use crate::rng::rng_for;

    const DAY: i64 = SECONDS_PER_DAY;

    fn ev(song: u32, station: u32, fb: FeedbackType, ts: i64) -> FeedbackEvent {
        FeedbackEvent {
            user: UserId(0),
            song: SongId(song),
            station: StationId(station),
            feedback: fb,
            timestamp: ts,
        }
    }

    fn seq(events: Vec<FeedbackEvent>) -> UserSequence {
        UserSequence::new(UserId(0), events, 1000)
    }

    use FeedbackType::{Down, Skip, Up};

    #[test]
    fn single_up_masks_only_it() {
        let s = seq(vec![ev(1, 1, Up, 10)]);
        let plan = plan_masks(&s, 0.9, &mut rng_for(1, &[]));
        assert_eq!(plan.masked_positions, vec![0]);
        assert!(plan.forced_final);
    }

    #[test]
    fn zero_p_task_masks_only_final() {
        let s = seq((0..50).map(|i| ev(i, 1, Up, i as i64)).collect());
        let plan = plan_masks(&s, 0.0, &mut rng_for(1, &[]));
        assert_eq!(plan.masked_positions, vec![49]);
    }

    #[test]
    fn masks_only_up_positions() {
        let s = seq((0..200)
            .map(|i| ev(i, 1, if i % 2 == 0 { Skip } else { Up }, i as i64))
            .collect());
        let plan = plan_masks(&s, 1.0, &mut rng_for(1, &[]));
        assert!(plan.masked_positions.iter().all(|&i| s.events[i].feedback == Up));
        assert_eq!(plan.masked_positions.len(), 100);
    }

    #[test]
    fn same_day_down_beats_future_skip() {
        let s = seq(vec![
            ev(1, 1, Up, DAY + 10),
            ev(2, 1, Down, DAY + 20),
            ev(3, 1, Skip, 5 * DAY),
        ]);
        let h = select_hard_negative(&s, 0, &[false; 3], &Default::default(), 100, &mut rng_for(1, &[]));
        assert_eq!(h.source, NegativeSource::SameDayDown);
        assert_eq!(h.song, SongId(2));
        assert_eq!(h.event_index, Some(1));
    }

    #[test]
    fn no_negatives_falls_back_to_random() {
        let s = seq(vec![ev(1, 1, Up, 0), ev(2, 1, Up, 10)]);
        for seed in 0..50 {
            let h = select_hard_negative(&s, 1, &[false; 2], &Default::default(), 3, &mut rng_for(seed, &[]));
            assert_eq!(h.source, NegativeSource::Random);
            assert_ne!(h.song, SongId(2));
            assert!(h.song.0 < 3);
            assert_eq!(h.event_index, None);
        }
    }

    #[test]
    fn only_future_skip() {
        let s = seq(vec![ev(1, 1, Up, DAY), ev(3, 2, Skip, 3 * DAY)]);
        let h = select_hard_negative(&s, 0, &[false; 2], &Default::default(), 100, &mut rng_for(1, &[]));
        assert_eq!(h.source, NegativeSource::FutureSkip);
    }

    #[test]
    fn same_day_other_station_is_not_same_day() {
        // Earlier on the same day but another station: neither same-day nor future.
        let s = seq(vec![ev(3, 2, Down, DAY), ev(1, 1, Up, DAY + 5)]);
        let h = select_hard_negative(&s, 1, &[false; 2], &Default::default(), 100, &mut rng_for(1, &[]));
        assert_eq!(h.source, NegativeSource::Random);
        // A later one on another station counts as future.
        let s = seq(vec![ev(1, 1, Up, DAY), ev(3, 2, Down, DAY + 5)]);
        let h = select_hard_negative(&s, 0, &[false; 2], &Default::default(), 100, &mut rng_for(1, &[]));
        assert_eq!(h.source, NegativeSource::FutureDown);
    }

    #[test]
    fn earlier_same_day_counts() {
        let s = seq(vec![ev(3, 1, Skip, DAY), ev(1, 1, Up, DAY + 5)]);
        let h = select_hard_negative(&s, 1, &[false; 2], &Default::default(), 100, &mut rng_for(1, &[]));
        assert_eq!(h.source, NegativeSource::SameDaySkip);
    }

    #[test]
    fn p_hard_extremes() {
        let plan = MaskPlan {
            masked_positions: (0..100).collect(),
            forced_final: true,
        };
        let mut rng = rng_for(3, &[]);
        assert!(apply_p_hard(&plan, 0.0, &mut rng).iter().all(|f| !f));
        assert!(apply_p_hard(&plan, 1.0, &mut rng).iter().all(|f| *f));
    }

    #[test]
    fn k_random_negatives() {
        let mut rng = rng_for(5, &[]);
        let one = sample_k_random_negatives(SongId(4), 1, 10, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        assert_ne!(one[0], SongId(4));

        let mut all = sample_k_random_negatives(SongId(4), 9, 10, &mut rng).unwrap();
        all.sort();
        let expected: Vec<_> = (0..10).filter(|&i| i != 4).map(SongId).collect();
        assert_eq!(all, expected);

        assert!(matches!(
            sample_k_random_negatives(SongId(0), 10, 10, &mut rng),
            Err(Error::CatalogTooSmall { .. })
        ));
        assert!(sample_k_random_negatives(SongId(0), 0, 10, &mut rng).is_err());
    }

    #[test]
    fn consumed_skip_is_removed_and_positions_shift() {
        let s = seq(vec![
            ev(10, 1, Up, DAY),
            ev(11, 1, Up, DAY + 1),
            ev(12, 1, Up, DAY + 2),
            ev(13, 1, Up, DAY + 3),
            ev(14, 1, Up, DAY + 4),
            ev(15, 1, Skip, DAY + 5),
            ev(16, 1, Up, DAY + 6),
        ]);
        let plan = MaskPlan {
            masked_positions: vec![6],
            forced_final: true,
        };
        let negs = [SlotNegatives {
            negatives: vec![SongId(15)],
            source: NegativeSource::SameDaySkip,
            consumed_event: Some(5),
        }];
        let ex = assemble_example(&s, &plan, &negs, InputMode::All);
        assert_eq!(ex.inputs.len(), 6);
        assert!(ex.inputs.iter().all(|t| t.song != Some(SongId(15))));
        let slot = &ex.slots[0];
        assert_eq!(slot.input_index, 5);
        let masked = ex.inputs[slot.input_index];
        assert_eq!(masked.song, None);
        assert_eq!(masked.station, StationId(1));
        assert_eq!(masked.feedback, Up);
        let positions: Vec<_> = ex.inputs.iter().map(|t| t.position).collect();
        assert_eq!(positions, vec![5, 4, 3, 2, 1, 0]);
    }

    #[test]
    fn random_negatives_leave_inputs_unchanged() {
        let s = seq(vec![ev(1, 1, Skip, 0), ev(2, 1, Down, 1), ev(3, 1, Up, 2)]);
        let plan = MaskPlan {
            masked_positions: vec![2],
            forced_final: true,
        };
        let negs = [SlotNegatives {
            negatives: vec![SongId(40)],
            source: NegativeSource::Random,
            consumed_event: None,
        }];
        let ex = assemble_example(&s, &plan, &negs, InputMode::All);
        assert_eq!(ex.inputs.len(), 3);
        let ex = assemble_example(&s, &plan, &negs, InputMode::PositiveOnly);
        assert_eq!(ex.inputs.len(), 1);
    }

    #[test]
    fn shared_skip_is_used_once() {
        // Two masked ups on the same day with a single same-day skip between them.
        let s = seq(vec![
            ev(1, 1, Up, DAY),
            ev(2, 1, Skip, DAY + 1),
            ev(3, 1, Up, DAY + 2),
            ev(4, 1, Skip, 4 * DAY),
        ]);
        let cfg = SamplingConfig {
            p_task: 1.0,
            p_hard: 1.0,
            ..Default::default()
        };
        let ex = build_example(&s, &cfg, 50, &mut rng_for(2, &[])).unwrap();
        let sources: Vec<_> = ex.slots.iter().map(|s| s.source).collect();
        // The later slot cannot reuse the same-day skip and falls through.
        assert_eq!(sources, vec![NegativeSource::SameDaySkip, NegativeSource::FutureSkip]);
        assert_eq!(ex.slots[0].negatives, vec![SongId(2)]);
        assert_eq!(ex.slots[1].negatives, vec![SongId(4)]);
        assert_eq!(ex.inputs.len(), 2);
    }

    #[test]
    fn inference_input_appends_masked_slot() {
        let ctx = seq(vec![ev(1, 1, Up, 0), ev(2, 1, Skip, 1), ev(3, 1, Up, 2)]);
        let inp = inference_input(&ctx, StationId(4), InputMode::All, 3);
        assert_eq!(inp.len(), 3);
        assert_eq!(inp[0].song, Some(SongId(2)));
        assert_eq!(inp[2].song, None);
        assert_eq!(inp[2].station, StationId(4));
        assert_eq!(inp[2].position, 0);
        let inp = inference_input(&ctx, StationId(4), InputMode::PositiveOnly, 10);
        assert_eq!(inp.len(), 3);
    }
}
