use negrec_core::data::{FeedbackType, SongId, StationId};
use negrec_core::model::{example_gradients, example_loss, forward, ModelConfig, ModelParams};
use negrec_core::sampling::{InputMode, InputToken, MaskedSlot, NegativeSource, TrainingExample};
use proptest::prelude::*;

fn token(song: Option<u32>, feedback: FeedbackType, position: usize) -> InputToken {
    InputToken {
        song: song.map(SongId),
        station: StationId(0),
        feedback,
        position,
    }
}

fn config(d_model: usize, catalog_size: usize) -> ModelConfig {
    ModelConfig {
        d_model,
        n_layers: 1,
        n_heads: 1,
        d_ff: d_model,
        max_len: 8,
        catalog_size,
        station_count: 0,
        dropout: 0.0,
        init_std: 0.5,
        seed: 3,
        use_positional: false,
        use_feedback: false,
        input_mode: InputMode::All,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn identity(m: &mut negrec_core::model::Matrix) {
    for r in 0..m.rows {
        for c in 0..m.cols {
            m.data[r * m.cols + c] = if r == c { 1.0 } else { 0.0 };
        }
    }
}

/// Two-dimensional model, one layer, one masked position, unit norms and
/// identity projections: every intermediate value has a closed form.
#[test]
fn hand_computed_single_position_score() {
    let cfg = config(2, 2);
    let mut p = ModelParams::zeros(&cfg);
    p.song.row_mut(cfg.mask_row()).copy_from_slice(&[1.0, 0.0]);
    p.song.row_mut(0).copy_from_slice(&[2.0, 3.0]);
    let l = &mut p.layers[0];
    l.ln1_gain = vec![1.0; 2];
    l.ln2_gain = vec![1.0; 2];
    identity(&mut l.wv);
    identity(&mut l.wo);
    identity(&mut l.w1);
    identity(&mut l.w2);
    p.final_gain = vec![1.0; 2];

    let eps = 1e-5f64;
    let c = 0.5 / (0.25 + eps).sqrt();
    let k = (0.5 + c) / ((0.5 + c).powi(2) + eps).sqrt();
    let m = (1.0 + 2.0 * c + k) / 2.0;
    let t = m / (m * m + eps).sqrt();

    let fwd = forward(&p, &[token(None, FeedbackType::Up, 0)], None).unwrap();
    let y = fwd.contextual(0);
    assert!((y[0] - t).abs() < 1e-12 && (y[1] + t).abs() < 1e-12, "{y:?}");
    assert!((dot(y, p.song.row(0)) + t).abs() < 1e-12);
}

#[test]
fn zero_parameters_score_everything_zero() {
    let cfg = config(4, 5);
    let p = ModelParams::zeros(&cfg);
    let inputs = [token(Some(1), FeedbackType::Down, 1), token(None, FeedbackType::Up, 0)];
    let fwd = forward(&p, &inputs, None).unwrap();
    for song in 0..5 {
        assert_eq!(dot(fwd.contextual(1), p.song.row(song)), 0.0);
    }
}

fn two_input_example() -> TrainingExample {
    TrainingExample {
        inputs: vec![
            token(Some(0), FeedbackType::Up, 2),
            token(Some(1), FeedbackType::Skip, 1),
            token(None, FeedbackType::Up, 0),
        ],
        slots: vec![MaskedSlot {
            input_index: 2,
            event_index: 2,
            positive: SongId(5),
            negatives: vec![SongId(6)],
            source: NegativeSource::Random,
            consumed_event: None,
        }],
    }
}

#[test]
fn songs_outside_the_example_get_no_gradient() {
    let cfg = config(4, 20);
    let p = ModelParams::init(&cfg);
    let (_, grads) = example_gradients(&p, &two_input_example()).unwrap();
    for song in 0..=cfg.catalog_size {
        let touched = grads.song.row(song).iter().any(|&g| g != 0.0);
        let expected = matches!(song, 0 | 1 | 5 | 6) || song == cfg.mask_row();
        assert_eq!(touched, expected, "song row {song}");
    }
}

#[test]
fn saturated_loss_has_vanishing_gradient() {
    let cfg = config(4, 20);
    let mut p = ModelParams::init(&cfg);
    let ex = two_input_example();
    let y = forward(&p, &ex.inputs, None).unwrap().contextual(2).to_vec();
    let norm2 = dot(&y, &y);
    // Output rows of the target and the negative are not inputs, so they
    // can be set without moving `y`.
    for (song, score) in [(5, 1e3), (6, -1e3)] {
        let row: Vec<f64> = y.iter().map(|v| v * score / norm2).collect();
        p.song.row_mut(song).copy_from_slice(&row);
    }
    let (loss, grads) = example_gradients(&p, &ex).unwrap();
    assert!(loss < 1e-300, "loss {loss}");
    let norm: f64 = grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    assert!(norm < 1e-6, "gradient norm {norm}");
}

fn feedback_of(i: u8) -> FeedbackType {
    match i % 3 {
        0 => FeedbackType::Up,
        1 => FeedbackType::Down,
        _ => FeedbackType::Skip,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Without positional embeddings the encoder is order-blind: a masked
    /// token's contextual vector does not depend on where the other inputs
    /// sit.
    #[test]
    fn order_blind_without_positions(
        songs in prop::collection::vec(0u32..10, 1..7),
        seed in any::<u64>(),
        rotate in 0usize..7,
    ) {
        let mut cfg = config(4, 10);
        cfg.seed = seed;
        cfg.n_heads = 2;
        let p = ModelParams::init(&cfg);
        let mut inputs: Vec<InputToken> = songs
            .iter()
            .enumerate()
            .map(|(i, &s)| token(Some(s), feedback_of(s as u8), i + 1))
            .collect();
        inputs.push(token(None, FeedbackType::Up, 0));
        let base = forward(&p, &inputs, None).unwrap();
        let last = inputs.len() - 1;
        let mut shuffled = inputs.clone();
        shuffled.rotate_left(rotate % inputs.len());
        let at = shuffled.iter().position(|t| t.song.is_none()).unwrap();
        let moved = forward(&p, &shuffled, None).unwrap();
        for (a, b) in base.contextual(last).iter().zip(moved.contextual(at)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    /// With the feedback table switched off, relabelling the inputs'
    /// feedback changes nothing.
    #[test]
    fn feedback_blind_when_table_disabled(
        songs in prop::collection::vec(0u32..10, 1..7),
        labels in prop::collection::vec(any::<u8>(), 7),
        seed in any::<u64>(),
    ) {
        let mut cfg = config(4, 10);
        cfg.seed = seed;
        cfg.use_positional = true;
        let p = ModelParams::init(&cfg);
        let n = songs.len();
        let build = |fb: &dyn Fn(usize) -> FeedbackType| -> TrainingExample {
            let mut inputs: Vec<InputToken> = songs
                .iter()
                .enumerate()
                .map(|(i, &s)| token(Some(s), fb(i), n - i))
                .collect();
            inputs.push(token(None, FeedbackType::Up, 0));
            TrainingExample {
                slots: vec![MaskedSlot {
                    input_index: n,
                    event_index: n,
                    positive: SongId(0),
                    negatives: vec![SongId(1)],
                    source: NegativeSource::Random,
                    consumed_event: None,
                }],
                inputs,
            }
        };
        let a = build(&|_| FeedbackType::Up);
        let b = build(&|i| feedback_of(labels[i]));
        prop_assert_eq!(example_loss(&p, &a).unwrap(), example_loss(&p, &b).unwrap());
    }
}
