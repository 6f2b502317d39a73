use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{coverage, evaluate, EvalConfig};
use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::sampling::InputMode;
use crate::training::{train, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    Full,
    NoPositional,
    NoHardNegatives,
    /// Only positive events as inputs; the feedback table is unused.
    PositiveOnly,
    HalfMaxLen,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::NoPositional,
        Ablation::NoHardNegatives,
        Ablation::PositiveOnly,
        Ablation::HalfMaxLen,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoPositional => "no-positional",
            Ablation::NoHardNegatives => "no-hard-negatives",
            Ablation::PositiveOnly => "positive-only",
            Ablation::HalfMaxLen => "half-max-len",
        }
    }

    /// Configs and data for this variant. The split is only rebuilt for the
    /// half-length variant.
    pub fn apply(
        self,
        split: &DatasetSplit,
        model: &ModelConfig,
        train: &TrainConfig,
    ) -> (Option<DatasetSplit>, ModelConfig, TrainConfig) {
        let (mut m, mut t) = (model.clone(), train.clone());
        let mut s = None;
        match self {
            Ablation::Full => {}
            Ablation::NoPositional => m.use_positional = false,
            Ablation::NoHardNegatives => t.p_hard = 0.0,
            Ablation::PositiveOnly => {
                m.input_mode = InputMode::PositiveOnly;
                m.use_feedback = false;
            }
            Ablation::HalfMaxLen => {
                let half = (split.config.max_len / 2).max(1);
                s = Some(split.with_max_len(half));
                // Keep the full model's headroom over the split length (the
                // scoring slot).
                m.max_len = half + model.max_len.saturating_sub(split.config.max_len);
            }
        }
        (s, m, t)
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Ablation,
    pub accuracy: f64,
    /// Accuracy minus the full model's, in percentage points.
    pub delta_points: f64,
    /// Same difference relative to the full model's accuracy.
    pub delta_relative: f64,
    pub coverage: f64,
    pub mrr_up: f64,
    pub mrr_down: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "variant\taccuracy\tdelta_points\tdelta_relative\tcoverage\tmrr_up\tmrr_down"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{}\t{:.6}\t{:+.3}\t{:+.4}\t{:.4}\t{:.6}\t{:.6}",
                r.variant.as_str(),
                r.accuracy,
                r.delta_points,
                r.delta_relative,
                r.coverage,
                r.mrr_up,
                r.mrr_down
            )?;
        }
        Ok(())
    }
}

/// Trains the full model and each requested variant with identical seeds
/// and reports the paired-accuracy change relative to the full model.
pub fn run_ablations(
    variants: &[Ablation],
    split: &DatasetSplit,
    model: &ModelConfig,
    train_config: &TrainConfig,
    eval: &EvalConfig,
) -> Result<AblationTable> {
    let mut results = Vec::new();
    let wanted = std::iter::once(Ablation::Full).chain(variants.iter().copied().filter(|v| *v != Ablation::Full));
    for v in wanted {
        let (s, m, t) = v.apply(split, model, train_config);
        let data = s.as_ref().unwrap_or(split);
        let (params, _) = train(data, &m, &t)?;
        let report = evaluate(&params, data, eval)?;
        results.push((v, report, coverage(data).for_mode(m.input_mode)));
    }
    let base = results[0].1.paired_accuracy;
    Ok(AblationTable {
        rows: results
            .into_iter()
            .map(|(variant, r, cov)| AblationRow {
                variant,
                accuracy: r.paired_accuracy,
                delta_points: 100.0 * (r.paired_accuracy - base),
                delta_relative: (r.paired_accuracy - base) / base,
                coverage: cov,
                mrr_up: r.mrr.mrr_up,
                mrr_down: r.mrr.mrr_down,
            })
            .collect(),
    })
}
