//! Helpers shared by the integration tests and the acceptance harness:
//! random inputs and independent brute-force reference implementations.
#![allow(dead_code)]

use negrec_core::data::{FeedbackEvent, FeedbackType, SongId, StationId, UserId, UserSequence};
use negrec_core::model::{example_gradients, example_loss, forward, ModelConfig, ModelParams};
use negrec_core::sampling::{build_example, InputMode, NegativeSource, SamplingConfig, TrainingExample};
use rand::Rng;

pub const DAY: i64 = 86_400;

/// A random user history over a small catalog: a few days, a few stations,
/// mixed feedback, strictly increasing timestamps.
pub fn random_sequence<R: Rng>(rng: &mut R, max_events: usize, songs: u32, stations: u32) -> UserSequence {
    let n = rng.random_range(1..=max_events);
    let mut ts = rng.random_range(0..5 * DAY);
    let events = (0..n)
        .map(|_| {
            ts += if rng.random_bool(0.3) {
                rng.random_range(DAY / 2..2 * DAY)
            } else {
                rng.random_range(1..3_600)
            };
            let feedback = match rng.random_range(0..10) {
                0..=4 => FeedbackType::Up,
                5..=6 => FeedbackType::Down,
                _ => FeedbackType::Skip,
            };
            FeedbackEvent {
                user: UserId(0),
                song: SongId(rng.random_range(0..songs)),
                station: StationId(rng.random_range(0..=stations)),
                feedback,
                timestamp: ts,
            }
        })
        .collect();
    UserSequence::new(UserId(0), events, max_events)
}

/// Cascade category recomputed from the definitions, one rule at a time.
pub fn brute_force_category(masked: &FeedbackEvent, e: &FeedbackEvent) -> Option<NegativeSource> {
    let negative = matches!(e.feedback, FeedbackType::Down | FeedbackType::Skip);
    if !negative || e.song == masked.song {
        return None;
    }
    let same_day = e.timestamp.div_euclid(DAY) == masked.timestamp.div_euclid(DAY);
    let later = e.timestamp > masked.timestamp;
    let same_station = e.station == masked.station;
    let down = e.feedback == FeedbackType::Down;
    let rules = [
        (same_day && same_station && down, NegativeSource::SameDayDown),
        (same_day && same_station && !down, NegativeSource::SameDaySkip),
        (later && down, NegativeSource::FutureDown),
        (later && !down, NegativeSource::FutureSkip),
    ];
    rules.iter().find(|(hit, _)| *hit).map(|&(_, s)| s)
}

/// Checks an example built with `p_hard = 1` against a from-scratch
/// recomputation of every slot's cascade. Returns a description of the first
/// disagreement.
pub fn check_cascade(seq: &UserSequence, ex: &TrainingExample) -> Result<(), String> {
    let mut used = vec![false; seq.len()];
    for slot in &ex.slots {
        let masked = &seq.events[slot.event_index];
        if masked.feedback != FeedbackType::Up || slot.positive != masked.song {
            return Err(format!("slot {} does not target an up", slot.event_index));
        }
        let best = (0..seq.len())
            .filter(|&j| j != slot.event_index && !used[j])
            .filter_map(|j| brute_force_category(masked, &seq.events[j]))
            .min()
            .unwrap_or(NegativeSource::Random);
        if slot.source != best {
            return Err(format!(
                "slot {}: got {:?}, expected {:?}",
                slot.event_index, slot.source, best
            ));
        }
        let neg = slot.negatives[0];
        if neg == slot.positive {
            return Err("negative equals the positive".into());
        }
        match slot.consumed_event {
            None if best == NegativeSource::Random => {}
            Some(j) if best != NegativeSource::Random => {
                let e = &seq.events[j];
                if used[j] || j == slot.event_index || e.song != neg {
                    return Err(format!(
                        "slot {}: consumed event {j} is not its negative",
                        slot.event_index
                    ));
                }
                if brute_force_category(masked, e) != Some(best) {
                    return Err(format!(
                        "slot {}: consumed event {j} is not in {best:?}",
                        slot.event_index
                    ));
                }
                used[j] = true;
            }
            other => {
                return Err(format!(
                    "slot {}: consumed {other:?} with source {best:?}",
                    slot.event_index
                ));
            }
        }
    }
    // Consumed negatives are gone from the inputs; everything else stays in
    // order, masked slots as the mask token.
    let masked: Vec<usize> = ex.slots.iter().map(|s| s.event_index).collect();
    let expected: Vec<Option<SongId>> = (0..seq.len())
        .filter(|&j| !used[j])
        .map(|j| (!masked.contains(&j)).then_some(seq.events[j].song))
        .collect();
    let got: Vec<Option<SongId>> = ex.inputs.iter().map(|t| t.song).collect();
    if got != expected {
        return Err(format!("inputs {got:?}, expected {expected:?}"));
    }
    Ok(())
}

/// Exhaustive pairwise AUC of one user's positive and negative scores.
pub fn exhaustive_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut total = 0.0;
    for p in pos {
        for n in neg {
            total += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (pos.len() * neg.len()) as f64
}

/// A random tiny model and a matching single-negative example with at
/// least one slot.
pub fn tiny_case<R: Rng>(rng: &mut R) -> (ModelParams, TrainingExample) {
    let heads = rng.random_range(1..=2);
    let d_model = heads * rng.random_range(2..=4).max(4 / heads);
    let catalog_size = rng.random_range(4..=8);
    let station_count = rng.random_range(0..=3);
    let max_len = 8;
    let config = ModelConfig {
        d_model,
        n_layers: rng.random_range(1..=2),
        n_heads: heads,
        d_ff: rng.random_range(2..=8),
        max_len,
        catalog_size,
        station_count,
        dropout: 0.0,
        init_std: 1.0,
        seed: rng.random(),
        use_positional: rng.random_bool(0.8),
        use_feedback: rng.random_bool(0.8),
        input_mode: InputMode::All,
    };
    let mut params = ModelParams::init(&config);
    // Move every parameter (layer-norm gains and zero biases included) off
    // its initial value so all gradients are exercised in general position.
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += 0.05 * (rng.random::<f64>() - 0.5);
        }
    }
    let sampling = SamplingConfig {
        p_task: 0.5,
        p_hard: 0.5,
        k_random: 1,
        ..Default::default()
    };
    loop {
        let mut seq = random_sequence(rng, max_len, catalog_size as u32, station_count as u32);
        if let Some(last) = seq.events.last_mut() {
            last.feedback = FeedbackType::Up;
        }
        let ex = build_example(&seq, &sampling, catalog_size, rng).expect("valid example");
        if !ex.slots.is_empty() {
            return (params, ex);
        }
    }
}

pub struct GradientCheck {
    /// Largest per-tensor relative error `‖a - n‖ / max(‖a‖, ‖n‖, floor)`
    /// between analytic (`a`) and numeric (`n`) gradients.
    pub max_relative_error: f64,
    /// Tensor attaining the maximum.
    pub worst_tensor: String,
    pub compared: usize,
    /// Components skipped because the `±h` probe crosses a ReLU kink.
    pub skipped_at_kinks: usize,
}

fn relu_pattern(params: &ModelParams, ex: &TrainingExample) -> Vec<bool> {
    forward(params, &ex.inputs, None).expect("forward").relu_pattern()
}

/// Compares the analytic gradient with central differences of step `h`,
/// tensor by tensor. Components whose probe changes the set of active ReLU
/// units are left out of both norms: the loss has a kink between the two
/// probe points and the difference quotient does not estimate a derivative
/// there.
pub fn gradient_check(params: &ModelParams, ex: &TrainingExample, h: f64, floor: f64) -> GradientCheck {
    let (_, grads) = example_gradients(params, ex).expect("forward");
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let names = params.tensor_names();
    let base_pattern = relu_pattern(params, ex);
    let mut probe = params.clone();
    let mut out = GradientCheck {
        max_relative_error: 0.0,
        worst_tensor: String::new(),
        compared: 0,
        skipped_at_kinks: 0,
    };
    for (t, g) in analytic.iter().enumerate() {
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        for (i, &ga) in g.iter().enumerate() {
            let orig = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + h;
            let up = example_loss(&probe, ex).expect("forward");
            let kink_up = relu_pattern(&probe, ex) != base_pattern;
            probe.tensors_mut()[t][i] = orig - h;
            let down = example_loss(&probe, ex).expect("forward");
            let kink_down = relu_pattern(&probe, ex) != base_pattern;
            probe.tensors_mut()[t][i] = orig;
            if kink_up || kink_down {
                out.skipped_at_kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            diff += (ga - numeric).powi(2);
            na += ga * ga;
            nn += numeric * numeric;
            out.compared += 1;
        }
        let rel = diff.sqrt() / na.sqrt().max(nn.sqrt()).max(floor);
        if rel > out.max_relative_error {
            out.max_relative_error = rel;
            out.worst_tensor = names[t].clone();
        }
    }
    out
}

/// Scores songs by table lookup, ignoring the context.
pub struct TableScorer(pub Vec<f64>);

impl negrec_core::eval::Scorer for TableScorer {
    type Query = ();

    fn prepare(&self, _: &UserSequence, _: StationId) -> negrec_core::Result<()> {
        Ok(())
    }

    fn score(&self, _: &(), song: SongId) -> f64 {
        self.0[song.0 as usize]
    }
}

/// A held-out window for user `u` with distinct songs `u * 32 ..` on one
/// station, at least one up and at least one negative.
pub fn random_window<R: Rng>(rng: &mut R, u: u32) -> negrec_core::data::EvalWindow {
    let n = rng.random_range(2..=24);
    let mut events: Vec<FeedbackEvent> = (0..n)
        .map(|i| FeedbackEvent {
            user: UserId(u),
            song: SongId(u * 32 + i as u32),
            station: StationId(1),
            feedback: match rng.random_range(0..3) {
                0 => FeedbackType::Up,
                1 => FeedbackType::Down,
                _ => FeedbackType::Skip,
            },
            timestamp: i as i64 * 60,
        })
        .collect();
    events[0].feedback = FeedbackType::Up;
    if !events.iter().any(|e| e.feedback.is_negative()) {
        events[1].feedback = FeedbackType::Skip;
    }
    negrec_core::data::EvalWindow {
        user: UserId(u),
        context: UserSequence::new(UserId(u), Vec::new(), 8),
        events,
    }
}

/// The AUC of one window under `scores`, from the raw event lists: ups
/// against downs, or against skips when the window has no downs.
pub fn window_auc(w: &negrec_core::data::EvalWindow, scores: &[f64]) -> f64 {
    let of = |f: FeedbackType| -> Vec<f64> {
        w.events
            .iter()
            .filter(|e| e.feedback == f)
            .map(|e| scores[e.song.0 as usize])
            .collect()
    };
    let downs = of(FeedbackType::Down);
    let negatives = if downs.is_empty() {
        of(FeedbackType::Skip)
    } else {
        downs
    };
    exhaustive_auc(&of(FeedbackType::Up), &negatives)
}

/// A small synthetic world and its split, for pipeline tests.
pub fn small_world(
    seed: u64,
    tweak: impl FnOnce(&mut negrec_core::synth::SynthConfig),
) -> (negrec_core::synth::SynthCorpus, negrec_core::data::DatasetSplit) {
    let mut cfg = negrec_core::synth::SynthConfig {
        n_users: 300,
        n_songs: 200,
        n_stations: 5,
        latent_dim: 4,
        seed,
        ..Default::default()
    };
    tweak(&mut cfg);
    let corpus = negrec_core::synth::generate_corpus(&cfg).expect("synth");
    let seqs = negrec_core::data::build_sequences(&corpus.events, 40);
    let split = negrec_core::data::split(
        &seqs,
        &negrec_core::data::SplitConfig {
            seed,
            max_len: 40,
            val_frac: 0.2,
            ..Default::default()
        },
    )
    .expect("split");
    (corpus, split)
}
