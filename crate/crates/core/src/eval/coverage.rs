use serde::{Deserialize, Serialize};

use crate::data::DatasetSplit;
use crate::sampling::InputMode;

/// Share of users the model can produce a recommendation for, i.e. users
/// with at least one event the input mode accepts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub users: usize,
    pub covered_all_inputs: usize,
    pub covered_positive_only: usize,
    pub coverage_all_inputs: f64,
    pub coverage_positive_only: f64,
}

impl CoverageReport {
    pub fn for_mode(&self, mode: InputMode) -> f64 {
        match mode {
            InputMode::All => self.coverage_all_inputs,
            InputMode::PositiveOnly => self.coverage_positive_only,
        }
    }
}

pub fn coverage(split: &DatasetSplit) -> CoverageReport {
    let users = split.users.len();
    let all = split.users.iter().filter(|u| u.total() > 0).count();
    let pos = split.users.iter().filter(|u| u.up + u.play > 0).count();
    let frac = |n: usize| if users == 0 { 0.0 } else { n as f64 / users as f64 };
    CoverageReport {
        users,
        covered_all_inputs: all,
        covered_positive_only: pos,
        coverage_all_inputs: frac(all),
        coverage_positive_only: frac(pos),
    }
}
