use serde::{Deserialize, Serialize};

use super::{
    accuracy_by_feedback_bin, coverage, feedback_similarity, mrr, paired_accuracy, BinRow, CoverageReport, ModelScorer,
    MrrReport, SimilarityMatrix, UserAccuracy,
};
use crate::data::{make_paired_tests, one_pair_per_user, DatasetSplit, FeedbackType};
use crate::error::Result;
use crate::model::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Songs ranked per MRR case, target included.
    pub pool_size: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            pool_size: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub paired_accuracy: f64,
    pub pooled_accuracy: f64,
    pub one_pair_accuracy: f64,
    pub users: usize,
    pub pairs: usize,
    pub users_without_pair: usize,
    pub mrr: MrrReport,
    pub coverage: CoverageReport,
    pub feedback_similarity: SimilarityMatrix,
    pub bins: Vec<BinRow>,
    pub per_user: Vec<UserAccuracy>,
}

/// Every test-set measurement for one trained model.
pub fn evaluate(params: &ModelParams, split: &DatasetSplit, config: &EvalConfig) -> Result<EvalReport> {
    let pairs = make_paired_tests(split);
    let scorer = ModelScorer::new(params);
    let acc = paired_accuracy(&scorer, &pairs.cases)?;
    let one = paired_accuracy(&scorer, &one_pair_per_user(&pairs.cases))?;
    let m = mrr(
        &scorer,
        &pairs.cases,
        config.pool_size,
        params.config.catalog_size,
        config.seed,
    )?;
    Ok(EvalReport {
        paired_accuracy: acc.accuracy,
        pooled_accuracy: acc.pooled,
        one_pair_accuracy: one.accuracy,
        users: acc.users,
        pairs: acc.pairs,
        users_without_pair: pairs.users_without_pair,
        mrr: m,
        coverage: coverage(split),
        feedback_similarity: feedback_similarity(params, &[FeedbackType::Up, FeedbackType::Down, FeedbackType::Skip]),
        bins: accuracy_by_feedback_bin(&acc.per_user, &split.users),
        per_user: acc.per_user,
    })
}
