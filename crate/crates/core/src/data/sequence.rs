use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{FeedbackEvent, FeedbackType, UserId};

/// Time-ordered events of one user (or session), holding at most `max_len`
/// of the most recent events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSequence {
    pub user: UserId,
    pub events: Vec<FeedbackEvent>,
    pub max_len: usize,
}

impl UserSequence {
    /// Sorts stably by timestamp (ties keep input order) and keeps the most
    /// recent `max_len` events.
    pub fn new(user: UserId, mut events: Vec<FeedbackEvent>, max_len: usize) -> Self {
        events.sort_by_key(|e| e.timestamp);
        if events.len() > max_len {
            events.drain(..events.len() - max_len);
        }
        UserSequence { user, events, max_len }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn ends_with_up(&self) -> bool {
        self.events.last().is_some_and(|e| e.feedback == FeedbackType::Up)
    }

    pub fn count(&self, f: FeedbackType) -> usize {
        self.events.iter().filter(|e| e.feedback == f).count()
    }

    /// Drops events after the last `Up`. Returns `None` when there is no `Up`.
    pub fn trimmed_to_last_up(&self) -> Option<UserSequence> {
        let last = self.events.iter().rposition(|e| e.feedback == FeedbackType::Up)?;
        Some(UserSequence {
            user: self.user,
            events: self.events[..=last].to_vec(),
            max_len: self.max_len,
        })
    }
}

/// Groups events per user, ordered by user index.
pub fn build_sequences(events: &[FeedbackEvent], max_len: usize) -> Vec<UserSequence> {
    let mut by_user: BTreeMap<UserId, Vec<FeedbackEvent>> = BTreeMap::new();
    for ev in events {
        by_user.entry(ev.user).or_default().push(*ev);
    }
    by_user
        .into_iter()
        .map(|(u, evs)| UserSequence::new(u, evs, max_len))
        .filter(|s| !s.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SongId, StationId};

    fn ev(user: u32, song: u32, ts: i64) -> FeedbackEvent {
        FeedbackEvent {
            user: UserId(user),
            song: SongId(song),
            station: StationId::NULL,
            feedback: FeedbackType::Up,
            timestamp: ts,
        }
    }

    #[test]
    fn truncation_keeps_latest() {
        let events: Vec<_> = (0..450).map(|i| ev(0, i, i as i64)).collect();
        let seqs = build_sequences(&events, 400);
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].len(), 400);
        assert_eq!(seqs[0].events[0].song, SongId(50));
        assert_eq!(seqs[0].events[399].song, SongId(449));
    }

    #[test]
    fn single_event() {
        let seqs = build_sequences(&[ev(3, 1, 10)], 400);
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].len(), 1);
    }

    #[test]
    fn interleaved_users_are_separated_and_sorted() {
        let events = vec![ev(0, 1, 30), ev(1, 2, 5), ev(0, 3, 10), ev(1, 4, 1), ev(0, 5, 20)];
        let seqs = build_sequences(&events, 400);
        assert_eq!(seqs.len(), 2);
        let ts: Vec<_> = seqs[0].events.iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, vec![10, 20, 30]);
        let ts: Vec<_> = seqs[1].events.iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, vec![1, 5]);
    }

    #[test]
    fn equal_timestamps_keep_ingestion_order() {
        let events = vec![ev(0, 7, 5), ev(0, 8, 5), ev(0, 9, 1)];
        let seq = &build_sequences(&events, 10)[0];
        let songs: Vec<_> = seq.events.iter().map(|e| e.song.0).collect();
        assert_eq!(songs, vec![9, 7, 8]);
    }

    #[test]
    fn trim_drops_trailing_negatives() {
        let mut e = vec![ev(0, 1, 1), ev(0, 2, 2), ev(0, 3, 3)];
        e[2].feedback = FeedbackType::Skip;
        let s = UserSequence::new(UserId(0), e, 10);
        assert!(!s.ends_with_up());
        let t = s.trimmed_to_last_up().unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.ends_with_up());
    }
}
