use super::encoder::dot;
use super::{backward, forward, ModelParams};
use crate::data::SongId;
use crate::error::Result;
use crate::sampling::TrainingExample;

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of one positive and one negative score:
/// `-ln σ(pos) - ln(1 - σ(neg)) = softplus(-pos) + softplus(neg)`.
pub fn bce_pair_loss(score_pos: f64, score_neg: f64) -> f64 {
    softplus(-score_pos) + softplus(score_neg)
}

/// Derivatives of [`bce_pair_loss`] w.r.t. the two scores.
pub fn bce_pair_grad(score_pos: f64, score_neg: f64) -> (f64, f64) {
    (-sigmoid(-score_pos), sigmoid(score_neg))
}

/// Highest-scoring candidate; ties go to the lowest song id.
pub fn hardest_of_k(params: &ModelParams, contextual: &[f64], candidates: &[SongId]) -> SongId {
    assert!(!candidates.is_empty(), "no negative candidates");
    if candidates.len() == 1 {
        return candidates[0];
    }
    let mut best = candidates[0];
    let mut best_score = dot(contextual, params.song.row(best.0 as usize));
    for &c in &candidates[1..] {
        let s = dot(contextual, params.song.row(c.0 as usize));
        if s > best_score || (s == best_score && c < best) {
            best = c;
            best_score = s;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExampleLoss {
    /// Summed over slots.
    pub loss: f64,
    pub slots: usize,
    /// Negative used for each slot.
    pub chosen: Vec<SongId>,
}

/// Forward, per-slot loss (summed) and backward for one example, adding the
/// unscaled gradient into `grads`.
pub fn accumulate_example(
    params: &ModelParams,
    example: &TrainingExample,
    dropout_rng: Option<&mut dyn rand::RngCore>,
    grads: &mut ModelParams,
) -> Result<ExampleLoss> {
    let fwd = forward(params, &example.inputs, dropout_rng)?;
    let d = params.config.d_model;
    let mut d_out = vec![0.0; fwd.output.len()];
    let mut loss = 0.0;
    let mut chosen = Vec::with_capacity(example.slots.len());
    for slot in &example.slots {
        let y = fwd.contextual(slot.input_index);
        let neg = hardest_of_k(params, y, &slot.negatives);
        let e_pos = params.song.row(slot.positive.0 as usize);
        let e_neg = params.song.row(neg.0 as usize);
        let (sp, sn) = (dot(y, e_pos), dot(y, e_neg));
        loss += bce_pair_loss(sp, sn);
        let (gp, gn) = bce_pair_grad(sp, sn);
        let dy = &mut d_out[slot.input_index * d..(slot.input_index + 1) * d];
        for j in 0..d {
            dy[j] += gp * e_pos[j] + gn * e_neg[j];
        }
        for (g, yv) in grads.song.row_mut(slot.positive.0 as usize).iter_mut().zip(y) {
            *g += gp * yv;
        }
        for (g, yv) in grads.song.row_mut(neg.0 as usize).iter_mut().zip(y) {
            *g += gn * yv;
        }
        chosen.push(neg);
    }
    backward(params, &fwd, &d_out, grads);
    Ok(ExampleLoss {
        loss,
        slots: example.slots.len(),
        chosen,
    })
}

/// Summed slot loss without dropout.
pub fn example_loss(params: &ModelParams, example: &TrainingExample) -> Result<f64> {
    let fwd = forward(params, &example.inputs, None)?;
    Ok(example
        .slots
        .iter()
        .map(|slot| {
            let y = fwd.contextual(slot.input_index);
            let neg = hardest_of_k(params, y, &slot.negatives);
            bce_pair_loss(
                dot(y, params.song.row(slot.positive.0 as usize)),
                dot(y, params.song.row(neg.0 as usize)),
            )
        })
        .sum())
}

/// Loss and full gradient set for one example, without dropout.
pub fn example_gradients(params: &ModelParams, example: &TrainingExample) -> Result<(f64, ModelParams)> {
    let mut grads = params.zeros_like();
    let out = accumulate_example(params, example, None, &mut grads)?;
    Ok((out.loss, grads))
}
