//! Epoch loop: per-epoch example construction, mini-batch Adam, validation
//! paired accuracy after every epoch, early stopping, and the p_hard / k
//! sweeps built on top of it.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{make_paired_tests, make_validation_pairs, one_pair_per_user, DatasetSplit};
use crate::error::{Error, Result};
use crate::eval::{mrr, paired_accuracy, ModelScorer};
use crate::model::{accumulate_example, ModelConfig, ModelParams};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{rng_for, stream};
use crate::sampling::{build_example, CascadeOptions, NegativeSource, SamplingConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub p_task: f64,
    pub p_hard: f64,
    pub k_random: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// An epoch counts as converged once its validation accuracy is within
    /// this distance of the run's best.
    pub convergence_tolerance: f64,
    pub seed: u64,
    pub adam: AdamConfig,
    pub cascade: CascadeOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            p_task: 0.15,
            p_hard: 0.0,
            k_random: 1,
            batch_size: 64,
            max_epochs: 50,
            patience: 3,
            convergence_tolerance: 0.005,
            seed: 0,
            adam: AdamConfig::default(),
            cascade: CascadeOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        prob("p_task", self.p_task)?;
        prob("p_hard", self.p_hard)?;
        if self.k_random == 0 {
            return Err(Error::Config("k_random must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.adam.learning_rate.is_nan() || self.adam.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn sampling(&self, model: &ModelConfig) -> SamplingConfig {
        SamplingConfig {
            p_task: self.p_task,
            p_hard: self.p_hard,
            k_random: self.k_random,
            input_mode: model.input_mode,
            cascade: self.cascade,
        }
    }
}

/// Slot counts per negative source, in cascade order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceHistogram {
    pub same_day_down: usize,
    pub same_day_skip: usize,
    pub future_down: usize,
    pub future_skip: usize,
    pub random: usize,
}

impl SourceHistogram {
    pub fn add(&mut self, source: NegativeSource) {
        match source {
            NegativeSource::SameDayDown => self.same_day_down += 1,
            NegativeSource::SameDaySkip => self.same_day_skip += 1,
            NegativeSource::FutureDown => self.future_down += 1,
            NegativeSource::FutureSkip => self.future_skip += 1,
            NegativeSource::Random => self.random += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.same_day_down + self.same_day_skip + self.future_down + self.future_skip + self.random
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss per masked slot.
    pub train_loss: f64,
    pub validation_accuracy: Option<f64>,
    /// Wall-clock time; left out of serialized reports so that they stay
    /// byte-identical across reruns.
    #[serde(default, skip_serializing)]
    pub seconds: f64,
    pub slots: usize,
    pub sources: SourceHistogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept (0 = untrained).
    pub best_epoch: usize,
    pub best_validation_accuracy: Option<f64>,
    /// First epoch whose validation accuracy came within the tolerance of
    /// the best.
    pub epochs_to_converge: usize,
    pub stopped_early: bool,
    pub parameter_count: usize,
}

impl TrainReport {
    pub fn validation_curve(&self) -> Vec<f64> {
        self.epochs.iter().filter_map(|e| e.validation_accuracy).collect()
    }
}

/// Trains from a fresh initialization and returns the parameters from the
/// epoch with the best validation accuracy (the last epoch when there are no
/// validation pairs).
pub fn train(
    split: &DatasetSplit,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    train_with_progress(split, model_config, config, |_| {})
}

pub fn train_with_progress(
    split: &DatasetSplit,
    model_config: &ModelConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(ModelParams, TrainReport)> {
    model_config.validate()?;
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }
    let needed = split.longest_input();
    if needed > model_config.max_len {
        return Err(Error::Config(format!(
            "model max_len {} is shorter than the longest input ({needed})",
            model_config.max_len
        )));
    }
    let catalog_size = model_config.catalog_size;
    let sampling = config.sampling(model_config);
    let val_pairs = make_validation_pairs(split).cases;

    let mut params = ModelParams::init(model_config);
    let mut grads = params.zeros_like();
    let mut adam = Adam::new(config.adam, &params);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut epochs = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let mut rng = rng_for(config.seed, &[stream::EPOCH, epoch as u64]);
        order.shuffle(&mut rng);
        let mut sources = SourceHistogram::default();
        let (mut epoch_loss, mut epoch_slots) = (0.0, 0usize);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            grads.fill(0.0);
            let (mut loss, mut slots) = (0.0, 0usize);
            for &i in batch {
                let ex = build_example(&split.train[i], &sampling, catalog_size, &mut rng)?;
                for s in &ex.slots {
                    sources.add(s.source);
                }
                let out = accumulate_example(&params, &ex, Some(&mut rng), &mut grads)?;
                loss += out.loss;
                slots += out.slots;
            }
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            if slots == 0 {
                continue;
            }
            grads.scale(1.0 / slots as f64);
            adam.step(&mut params, &grads);
            epoch_loss += loss;
            epoch_slots += slots;
        }
        if !params.all_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
                loss: f64::NAN,
            });
        }
        let validation_accuracy = if val_pairs.is_empty() {
            None
        } else {
            Some(paired_accuracy(&ModelScorer::new(&params), &val_pairs)?.accuracy)
        };
        let stats = EpochStats {
            epoch,
            train_loss: if epoch_slots == 0 {
                0.0
            } else {
                epoch_loss / epoch_slots as f64
            },
            validation_accuracy,
            seconds: start.elapsed().as_secs_f64(),
            slots: epoch_slots,
            sources,
        };
        on_epoch(&stats);
        epochs.push(stats);

        let score = validation_accuracy.unwrap_or(f64::NEG_INFINITY);
        match &best {
            Some((b, _, _)) if score <= *b && validation_accuracy.is_some() => since_best += 1,
            _ => {
                best = Some((score, epoch, params.clone()));
                since_best = 0;
            }
        }
        if validation_accuracy.is_some() && since_best >= config.patience && config.patience > 0 {
            stopped_early = epoch < config.max_epochs;
            break;
        }
    }

    let parameter_count = params.parameter_count();
    let (best_acc, best_epoch, best_params) = match best {
        Some((acc, epoch, p)) => (acc.is_finite().then_some(acc), epoch, p),
        None => (None, 0, params),
    };
    let epochs_to_converge = match best_acc {
        Some(b) => epochs
            .iter()
            .find(|e| {
                e.validation_accuracy
                    .is_some_and(|a| a >= b - config.convergence_tolerance)
            })
            .map_or(best_epoch, |e| e.epoch),
        None => best_epoch,
    };
    Ok((
        best_params,
        TrainReport {
            epochs,
            best_epoch,
            best_validation_accuracy: best_acc,
            epochs_to_converge,
            stopped_early,
            parameter_count,
        },
    ))
}

/// Knobs for the test-set measurements run after each sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEval {
    pub pool_size: usize,
    pub seed: u64,
}

impl Default for SweepEval {
    fn default() -> Self {
        SweepEval {
            pool_size: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p_hard: f64,
    pub k_random: usize,
    pub accuracy: f64,
    pub pooled_accuracy: f64,
    pub one_pair_accuracy: f64,
    pub mrr_up: f64,
    pub mrr_down: f64,
    pub best_epoch: usize,
    pub epochs_to_converge: usize,
}

pub struct SweepRun {
    pub row: SweepRow,
    pub params: ModelParams,
    pub report: TrainReport,
}

fn sweep_point(
    split: &DatasetSplit,
    model_config: &ModelConfig,
    config: &TrainConfig,
    eval: &SweepEval,
) -> Result<SweepRun> {
    let (params, report) = train(split, model_config, config)?;
    let cases = make_paired_tests(split).cases;
    let scorer = ModelScorer::new(&params);
    let acc = paired_accuracy(&scorer, &cases)?;
    let one = paired_accuracy(&scorer, &one_pair_per_user(&cases))?;
    let m = mrr(&scorer, &cases, eval.pool_size, model_config.catalog_size, eval.seed)?;
    Ok(SweepRun {
        row: SweepRow {
            p_hard: config.p_hard,
            k_random: config.k_random,
            accuracy: acc.accuracy,
            pooled_accuracy: acc.pooled,
            one_pair_accuracy: one.accuracy,
            mrr_up: m.mrr_up,
            mrr_down: m.mrr_down,
            best_epoch: report.best_epoch,
            epochs_to_converge: report.epochs_to_converge,
        },
        params,
        report,
    })
}

/// One full training run per `p_hard` value, everything else fixed.
pub fn sweep_p_hard(
    values: &[f64],
    split: &DatasetSplit,
    model_config: &ModelConfig,
    config: &TrainConfig,
    eval: &SweepEval,
) -> Result<Vec<SweepRun>> {
    values
        .iter()
        .map(|&p| {
            let cfg = TrainConfig {
                p_hard: p,
                ..config.clone()
            };
            sweep_point(split, model_config, &cfg, eval)
        })
        .collect()
}

/// Hardest-of-k random negatives with no cascade (`p_hard = 0`), one run per
/// `k`.
pub fn sweep_k(
    values: &[usize],
    split: &DatasetSplit,
    model_config: &ModelConfig,
    config: &TrainConfig,
    eval: &SweepEval,
) -> Result<Vec<SweepRun>> {
    values
        .iter()
        .map(|&k| {
            let cfg = TrainConfig {
                p_hard: 0.0,
                k_random: k,
                ..config.clone()
            };
            sweep_point(split, model_config, &cfg, eval)
        })
        .collect()
}

pub fn write_sweep_table<W: Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(
        w,
        "p_hard\tk\taccuracy\tpooled_accuracy\tone_pair_accuracy\tmrr_up\tmrr_down\tbest_epoch\tepochs_to_converge"
    )?;
    for r in rows {
        writeln!(
            w,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            r.p_hard,
            r.k_random,
            r.accuracy,
            r.pooled_accuracy,
            r.one_pair_accuracy,
            r.mrr_up,
            r.mrr_down,
            r.best_epoch,
            r.epochs_to_converge
        )?;
    }
    Ok(())
}
