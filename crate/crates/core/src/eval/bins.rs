use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::UserAccuracy;
use crate::data::UserSummary;

pub const BIN_COUNT: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub lower: f64,
    pub upper: f64,
    pub users: usize,
    /// `None` when no evaluated user falls in the bin.
    pub accuracy: Option<f64>,
}

/// Mean per-user paired accuracy grouped by each user's share of `up`
/// feedback, in ten bins of width 0.1 (the last one closed).
pub fn accuracy_by_feedback_bin(per_user: &[UserAccuracy], users: &[UserSummary]) -> Vec<BinRow> {
    let summary: HashMap<_, _> = users.iter().map(|u| (u.user, u)).collect();
    let mut sums = [(0.0, 0usize); BIN_COUNT];
    for ua in per_user {
        let Some(s) = summary.get(&ua.user) else { continue };
        if s.total() == 0 {
            continue;
        }
        let bin = (s.up * BIN_COUNT / s.total()).min(BIN_COUNT - 1);
        sums[bin].0 += ua.accuracy;
        sums[bin].1 += 1;
    }
    sums.iter()
        .enumerate()
        .map(|(i, &(sum, n))| BinRow {
            lower: i as f64 / BIN_COUNT as f64,
            upper: (i + 1) as f64 / BIN_COUNT as f64,
            users: n,
            accuracy: (n > 0).then(|| sum / n as f64),
        })
        .collect()
}
