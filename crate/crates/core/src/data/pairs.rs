use std::sync::Arc;

use super::{DatasetSplit, EvalWindow, FeedbackEvent, FeedbackType, StationId, UserId, UserSequence};

/// One positive and one negative event from a held-out window, scored
/// against the same context.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedTestCase {
    pub user: UserId,
    pub context: Arc<UserSequence>,
    pub positive: FeedbackEvent,
    pub negative: FeedbackEvent,
    /// Station the prediction is made for (the positive's station).
    pub station: StationId,
}

#[derive(Clone, Debug, Default)]
pub struct PairSet {
    pub cases: Vec<PairedTestCase>,
    /// Users with window events that did not yield a single valid pair.
    pub users_without_pair: usize,
}

/// Pairs every `up` in a window with the user's negatives from the same
/// station (when `match_station`), using downs when any exist and skips
/// otherwise.
pub fn pairs_from_windows(windows: &[EvalWindow], match_station: bool) -> PairSet {
    let mut out = PairSet::default();
    for w in windows {
        let context = Arc::new(w.context.clone());
        let before = out.cases.len();
        for pos in w.events.iter().filter(|e| e.feedback == FeedbackType::Up) {
            let eligible = |e: &&FeedbackEvent| e.song != pos.song && (!match_station || e.station == pos.station);
            let downs: Vec<_> = w
                .events
                .iter()
                .filter(|e| e.feedback == FeedbackType::Down)
                .filter(eligible)
                .collect();
            let negatives = if downs.is_empty() {
                w.events
                    .iter()
                    .filter(|e| e.feedback == FeedbackType::Skip)
                    .filter(eligible)
                    .collect()
            } else {
                downs
            };
            for neg in negatives {
                out.cases.push(PairedTestCase {
                    user: w.user,
                    context: Arc::clone(&context),
                    positive: *pos,
                    negative: *neg,
                    station: pos.station,
                });
            }
        }
        if out.cases.len() == before {
            out.users_without_pair += 1;
        }
    }
    out
}

pub fn make_paired_tests(split: &DatasetSplit) -> PairSet {
    pairs_from_windows(&split.test, split.has_stations)
}

pub fn make_validation_pairs(split: &DatasetSplit) -> PairSet {
    pairs_from_windows(&split.validation_windows, split.has_stations)
}

/// Keeps the first pair of every user.
pub fn one_pair_per_user(cases: &[PairedTestCase]) -> Vec<PairedTestCase> {
    let mut seen = std::collections::HashSet::new();
    cases.iter().filter(|c| seen.insert(c.user)).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SongId;

    fn ev(song: u32, station: u32, fb: FeedbackType, ts: i64) -> FeedbackEvent {
        FeedbackEvent {
            user: UserId(0),
            song: SongId(song),
            station: StationId(station),
            feedback: fb,
            timestamp: ts,
        }
    }

    fn window(events: Vec<FeedbackEvent>) -> EvalWindow {
        EvalWindow {
            user: UserId(0),
            context: UserSequence::new(UserId(0), vec![ev(1, 1, FeedbackType::Up, 0)], 10),
            events,
        }
    }

    #[test]
    fn up_and_down_same_station_pair() {
        let w = window(vec![ev(3, 1, FeedbackType::Up, 100), ev(7, 1, FeedbackType::Down, 101)]);
        let p = pairs_from_windows(&[w], true);
        assert_eq!(p.cases.len(), 1);
        assert_eq!(p.cases[0].positive.song, SongId(3));
        assert_eq!(p.cases[0].negative.song, SongId(7));
    }

    #[test]
    fn different_stations_do_not_pair() {
        let w = window(vec![ev(3, 1, FeedbackType::Up, 100), ev(7, 2, FeedbackType::Down, 101)]);
        let p = pairs_from_windows(std::slice::from_ref(&w), true);
        assert!(p.cases.is_empty());
        assert_eq!(p.users_without_pair, 1);
        // Without station information the pair is valid.
        assert_eq!(pairs_from_windows(&[w], false).cases.len(), 1);
    }

    #[test]
    fn down_preferred_over_skip() {
        let w = window(vec![
            ev(3, 1, FeedbackType::Up, 100),
            ev(5, 1, FeedbackType::Skip, 101),
            ev(7, 1, FeedbackType::Down, 102),
        ]);
        let p = pairs_from_windows(&[w], true);
        assert_eq!(p.cases.len(), 1);
        assert_eq!(p.cases[0].negative.feedback, FeedbackType::Down);
    }

    #[test]
    fn skip_used_when_no_down() {
        let w = window(vec![ev(3, 1, FeedbackType::Up, 100), ev(5, 1, FeedbackType::Skip, 101)]);
        let p = pairs_from_windows(&[w], true);
        assert_eq!(p.cases[0].negative.feedback, FeedbackType::Skip);
    }

    #[test]
    fn all_valid_pairs_and_one_per_user_variant() {
        let w = window(vec![
            ev(3, 1, FeedbackType::Up, 100),
            ev(4, 1, FeedbackType::Up, 101),
            ev(7, 1, FeedbackType::Down, 102),
            ev(8, 1, FeedbackType::Down, 103),
        ]);
        let p = pairs_from_windows(&[w], true);
        assert_eq!(p.cases.len(), 4);
        let one = one_pair_per_user(&p.cases);
        assert_eq!(one.len(), 1);
        for c in &p.cases {
            assert!(c
                .context
                .events
                .iter()
                .all(|e| e.timestamp < c.positive.timestamp && e.timestamp < c.negative.timestamp));
        }
    }
}
