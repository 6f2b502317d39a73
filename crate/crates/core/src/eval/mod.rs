//! Measurements on held-out pairs: per-user paired accuracy (mean per-user
//! AUC), MRR of the up and down songs, coverage, feedback-embedding
//! similarity, accuracy by feedback-proportion bin and the ablation harness.

mod ablation;
mod bins;
mod coverage;
mod mrr;
mod paired;
mod report;
mod scorer;
mod similarity;

pub use ablation::{run_ablations, Ablation, AblationRow, AblationTable};
pub use bins::{accuracy_by_feedback_bin, BinRow};
pub use coverage::{coverage, CoverageReport};
pub use mrr::{mrr, reciprocal_rank, MrrReport};
pub use paired::{paired_accuracy, PairedAccuracy, UserAccuracy};
pub use report::{evaluate, EvalConfig, EvalReport};
pub use scorer::{ConstantScorer, ModelScorer, RandomScorer, Scorer};
pub use similarity::{cosine_similarity, feedback_similarity, SimilarityMatrix};
