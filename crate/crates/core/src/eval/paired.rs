use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Scorer;
use crate::data::{PairedTestCase, StationId, UserId};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserAccuracy {
    pub user: UserId,
    pub accuracy: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedAccuracy {
    /// Mean over users of each user's pairwise win rate.
    pub accuracy: f64,
    /// Win rate over all pairs pooled together.
    pub pooled: f64,
    pub users: usize,
    pub pairs: usize,
    pub per_user: Vec<UserAccuracy>,
}

/// Groups case indices by (user, station), in key order.
pub(crate) fn group_cases(cases: &[PairedTestCase]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<(UserId, StationId), Vec<usize>> = BTreeMap::new();
    for (i, c) in cases.iter().enumerate() {
        groups.entry((c.user, c.station)).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Scores each pair in its context: 1 when the positive outscores the
/// negative, 0.5 on a tie, 0 otherwise. The headline number averages per
/// user first.
pub fn paired_accuracy<S: Scorer>(scorer: &S, cases: &[PairedTestCase]) -> Result<PairedAccuracy> {
    if cases.is_empty() {
        return Err(Error::EmptyPartition("paired test cases"));
    }
    let groups = group_cases(cases);
    let scored: Vec<Vec<(usize, f64)>> = groups
        .par_iter()
        .map(|idx| {
            let first = &cases[idx[0]];
            let q = scorer.prepare(&first.context, first.station)?;
            Ok(idx
                .iter()
                .map(|&i| {
                    let sp = scorer.score(&q, cases[i].positive.song);
                    let sn = scorer.score(&q, cases[i].negative.song);
                    let win = if sp > sn {
                        1.0
                    } else if sp == sn {
                        0.5
                    } else {
                        0.0
                    };
                    (i, win)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut wins = vec![0.0; cases.len()];
    for (i, w) in scored.into_iter().flatten() {
        wins[i] = w;
    }
    let mut per_user: BTreeMap<UserId, (f64, usize)> = BTreeMap::new();
    for (c, w) in cases.iter().zip(&wins) {
        let e = per_user.entry(c.user).or_default();
        e.0 += w;
        e.1 += 1;
    }
    let per_user: Vec<UserAccuracy> = per_user
        .into_iter()
        .map(|(user, (sum, n))| UserAccuracy {
            user,
            accuracy: sum / n as f64,
            pairs: n,
        })
        .collect();
    let accuracy = per_user.iter().map(|u| u.accuracy).sum::<f64>() / per_user.len() as f64;
    Ok(PairedAccuracy {
        accuracy,
        pooled: wins.iter().sum::<f64>() / wins.len() as f64,
        users: per_user.len(),
        pairs: cases.len(),
        per_user,
    })
}
