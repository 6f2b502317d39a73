use rand::Rng;

use super::{LayerParams, Matrix, ModelParams, LAYER_NORM_EPS};
use crate::error::{Error, Result};
use crate::sampling::InputToken;

/// `out = x · w + b` for `rows` rows of `x`.
fn linear(x: &[f64], rows: usize, w: &Matrix, b: &[f64]) -> Vec<f64> {
    let (n_in, n_out) = (w.rows, w.cols);
    let mut out = vec![0.0; rows * n_out];
    for i in 0..rows {
        let o = &mut out[i * n_out..(i + 1) * n_out];
        o.copy_from_slice(b);
        for (k, &xv) in x[i * n_in..(i + 1) * n_in].iter().enumerate() {
            if xv != 0.0 {
                for (ov, wv) in o.iter_mut().zip(w.row(k)) {
                    *ov += xv * wv;
                }
            }
        }
    }
    out
}

/// Accumulates `dw += xᵀ·dy`, `db += Σ dy`; returns `dy · wᵀ`.
fn linear_backward(x: &[f64], rows: usize, w: &Matrix, dy: &[f64], dw: &mut Matrix, db: &mut [f64]) -> Vec<f64> {
    let (n_in, n_out) = (w.rows, w.cols);
    let mut dx = vec![0.0; rows * n_in];
    for i in 0..rows {
        let dyr = &dy[i * n_out..(i + 1) * n_out];
        for (d, g) in db.iter_mut().zip(dyr) {
            *d += g;
        }
        let xr = &x[i * n_in..(i + 1) * n_in];
        let dxr = &mut dx[i * n_in..(i + 1) * n_in];
        for k in 0..n_in {
            let wr = w.row(k);
            let mut acc = 0.0;
            for (g, wv) in dyr.iter().zip(wr) {
                acc += g * wv;
            }
            dxr[k] = acc;
            let xv = xr[k];
            if xv != 0.0 {
                for (dwv, g) in dw.row_mut(k).iter_mut().zip(dyr) {
                    *dwv += xv * g;
                }
            }
        }
    }
    dx
}

#[derive(Clone, Debug)]
struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &[f64], d: usize, gain: &[f64], bias: &[f64]) -> (Vec<f64>, NormCache) {
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; rows];
    for i in 0..rows {
        let r = &x[i * d..(i + 1) * d];
        let mean = r.iter().sum::<f64>() / d as f64;
        let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std[i] = inv;
        for j in 0..d {
            let h = (r[j] - mean) * inv;
            xhat[i * d + j] = h;
            y[i * d + j] = gain[j] * h + bias[j];
        }
    }
    (y, NormCache { xhat, inv_std })
}

/// Accumulates gain/bias gradients and adds the input gradient into `dx`.
fn layer_norm_backward(
    dy: &[f64],
    d: usize,
    cache: &NormCache,
    gain: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
    dx: &mut [f64],
) {
    let rows = dy.len() / d;
    let mut dxhat = vec![0.0; d];
    for i in 0..rows {
        let dyr = &dy[i * d..(i + 1) * d];
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let mut sum = 0.0;
        let mut sum_x = 0.0;
        for j in 0..d {
            dgain[j] += dyr[j] * xh[j];
            dbias[j] += dyr[j];
            dxhat[j] = dyr[j] * gain[j];
            sum += dxhat[j];
            sum_x += dxhat[j] * xh[j];
        }
        let inv = cache.inv_std[i];
        let n = d as f64;
        for j in 0..d {
            dx[i * d + j] += inv / n * (n * dxhat[j] - sum - xh[j] * sum_x);
        }
    }
}

fn dropout_mask<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

#[derive(Clone, Debug)]
struct LayerCache {
    ln1: NormCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `heads × len × len` attention weights.
    probs: Vec<f64>,
    ctx: Vec<f64>,
    drop_attn: Option<Vec<f64>>,
    ln2: NormCache,
    b: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    drop_ff: Option<Vec<f64>>,
}

/// Forward pass over one input sequence, keeping what the backward pass
/// needs.
#[derive(Clone, Debug)]
pub struct Forward {
    tokens: Vec<InputToken>,
    drop_embed: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
    final_norm: NormCache,
    /// `len × d_model` contextual vectors.
    pub output: Vec<f64>,
    d: usize,
}

impl Forward {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contextual(&self, position: usize) -> &[f64] {
        &self.output[position * self.d..(position + 1) * self.d]
    }

    /// Which feed-forward units are active (pre-activation > 0), over all
    /// layers and positions. The loss is not differentiable where this
    /// pattern changes, which finite-difference checks need to know.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.layers
            .iter()
            .flat_map(|l| l.hidden_pre.iter().map(|&x| x > 0.0))
            .collect()
    }
}

/// Contextual vectors for the masked slots of one input.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreOutput {
    pub contextual: Vec<Vec<f64>>,
}

impl ScoreOutput {
    pub fn score(&self, params: &ModelParams, slot: usize, song: crate::data::SongId) -> f64 {
        dot(&self.contextual[slot], params.song.row(song.0 as usize))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_tokens(params: &ModelParams, tokens: &[InputToken]) -> Result<()> {
    let c = &params.config;
    if tokens.is_empty() {
        return Err(Error::OutOfRange("empty input".into()));
    }
    if tokens.len() > c.max_len {
        return Err(Error::OutOfRange(format!(
            "input of length {} exceeds max_len {}",
            tokens.len(),
            c.max_len
        )));
    }
    for t in tokens {
        if let Some(s) = t.song {
            if s.0 as usize >= c.catalog_size {
                return Err(Error::OutOfRange(format!("song {}", s.0)));
            }
        }
        if t.station.0 as usize > c.station_count {
            return Err(Error::OutOfRange(format!("station {}", t.station.0)));
        }
        if t.position >= c.max_len {
            return Err(Error::OutOfRange(format!("position {}", t.position)));
        }
    }
    Ok(())
}

/// Encodes `tokens`. With `dropout_rng` the configured dropout is applied
/// to the embedding sum and to both residual branches of every layer.
pub fn forward(
    params: &ModelParams,
    tokens: &[InputToken],
    mut dropout_rng: Option<&mut dyn rand::RngCore>,
) -> Result<Forward> {
    check_tokens(params, tokens)?;
    let c = &params.config;
    let d = c.d_model;
    let len = tokens.len();
    let p_drop = c.dropout;

    let mut x = vec![0.0; len * d];
    for (i, t) in tokens.iter().enumerate() {
        let row = &mut x[i * d..(i + 1) * d];
        let song_row = t.song.map_or(c.mask_row(), |s| s.0 as usize);
        row.copy_from_slice(params.song.row(song_row));
        add(row, params.station.row(t.station.0 as usize));
        if c.use_feedback {
            add(row, params.feedback.row(t.feedback.row()));
        }
        if c.use_positional {
            add(row, params.position.row(t.position));
        }
    }
    let mut mask_for = |n: usize| -> Option<Vec<f64>> {
        match dropout_rng.as_deref_mut() {
            Some(rng) if p_drop > 0.0 => Some(dropout_mask(n, p_drop, rng)),
            _ => None,
        }
    };
    let drop_embed = mask_for(len * d);
    if let Some(m) = &drop_embed {
        mul(&mut x, m);
    }

    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (a, ln1) = layer_norm(&x, d, &lp.ln1_gain, &lp.ln1_bias);
        let q = linear(&a, len, &lp.wq, &lp.bq);
        let k = linear(&a, len, &lp.wk, &lp.bk);
        let v = linear(&a, len, &lp.wv, &lp.bv);
        let (probs, ctx) = attention(&q, &k, &v, len, d, c.n_heads);
        let mut attn_out = linear(&ctx, len, &lp.wo, &lp.bo);
        let drop_attn = mask_for(len * d);
        if let Some(m) = &drop_attn {
            mul(&mut attn_out, m);
        }
        add(&mut x, &attn_out);

        let (b, ln2) = layer_norm(&x, d, &lp.ln2_gain, &lp.ln2_bias);
        let hidden_pre = linear(&b, len, &lp.w1, &lp.b1);
        let hidden: Vec<f64> = hidden_pre.iter().map(|&h| h.max(0.0)).collect();
        let mut ff_out = linear(&hidden, len, &lp.w2, &lp.b2);
        let drop_ff = mask_for(len * d);
        if let Some(m) = &drop_ff {
            mul(&mut ff_out, m);
        }
        add(&mut x, &ff_out);

        layers.push(LayerCache {
            ln1,
            a,
            q,
            k,
            v,
            probs,
            ctx,
            drop_attn,
            ln2,
            b,
            hidden_pre,
            hidden,
            drop_ff,
        });
    }
    let (output, final_norm) = layer_norm(&x, d, &params.final_gain, &params.final_bias);
    Ok(Forward {
        tokens: tokens.to_vec(),
        drop_embed,
        layers,
        final_norm,
        output,
        d,
    })
}

fn attention(q: &[f64], k: &[f64], v: &[f64], len: usize, d: usize, heads: usize) -> (Vec<f64>, Vec<f64>) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut probs = vec![0.0; heads * len * len];
    let mut ctx = vec![0.0; len * d];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..len {
            let qi = &q[i * d + cols.start..i * d + cols.end];
            let p = &mut probs[(h * len + i) * len..(h * len + i + 1) * len];
            let mut max = f64::NEG_INFINITY;
            for (j, pj) in p.iter_mut().enumerate() {
                *pj = dot(qi, &k[j * d + cols.start..j * d + cols.end]) * scale;
                max = max.max(*pj);
            }
            let mut sum = 0.0;
            for pj in p.iter_mut() {
                *pj = (*pj - max).exp();
                sum += *pj;
            }
            for pj in p.iter_mut() {
                *pj /= sum;
            }
            let out = &mut ctx[i * d + cols.start..i * d + cols.end];
            for (j, &pj) in p.iter().enumerate() {
                for (o, vv) in out.iter_mut().zip(&v[j * d + cols.start..j * d + cols.end]) {
                    *o += pj * vv;
                }
            }
        }
    }
    (probs, ctx)
}

/// Returns `(dq, dk, dv)`.
fn attention_backward(
    cache: &LayerCache,
    dctx: &[f64],
    len: usize,
    d: usize,
    heads: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = vec![0.0; len * d];
    let mut dk = vec![0.0; len * d];
    let mut dv = vec![0.0; len * d];
    let mut dp = vec![0.0; len];
    for h in 0..heads {
        let (c0, c1) = (h * dh, (h + 1) * dh);
        for i in 0..len {
            let p = &cache.probs[(h * len + i) * len..(h * len + i + 1) * len];
            let dci = &dctx[i * d + c0..i * d + c1];
            let mut weighted = 0.0;
            for j in 0..len {
                dp[j] = dot(dci, &cache.v[j * d + c0..j * d + c1]);
                weighted += dp[j] * p[j];
                for (g, dc) in dv[j * d + c0..j * d + c1].iter_mut().zip(dci) {
                    *g += p[j] * dc;
                }
            }
            for j in 0..len {
                let ds = p[j] * (dp[j] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                for c in c0..c1 {
                    dq[i * d + c] += ds * cache.k[j * d + c];
                    dk[j * d + c] += ds * cache.q[i * d + c];
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Back-propagates `d_output` (gradient of the loss w.r.t. the contextual
/// vectors, `len × d_model`) and accumulates into `grads`.
pub fn backward(params: &ModelParams, fwd: &Forward, d_output: &[f64], grads: &mut ModelParams) {
    let c = &params.config;
    let d = c.d_model;
    let len = fwd.len();

    let mut dx = vec![0.0; len * d];
    layer_norm_backward(
        d_output,
        d,
        &fwd.final_norm,
        &params.final_gain,
        &mut grads.final_gain,
        &mut grads.final_bias,
        &mut dx,
    );

    for (li, (lp, cache)) in params.layers.iter().zip(&fwd.layers).enumerate().rev() {
        let g: &mut LayerParams = &mut grads.layers[li];

        // Feed-forward branch: x += drop(W2·relu(W1·LN2(x)))
        let mut d_ff = dx.clone();
        if let Some(m) = &cache.drop_ff {
            mul(&mut d_ff, m);
        }
        let mut d_hidden = linear_backward(&cache.hidden, len, &lp.w2, &d_ff, &mut g.w2, &mut g.b2);
        for (dh, &pre) in d_hidden.iter_mut().zip(&cache.hidden_pre) {
            if pre <= 0.0 {
                *dh = 0.0;
            }
        }
        let d_b = linear_backward(&cache.b, len, &lp.w1, &d_hidden, &mut g.w1, &mut g.b1);
        layer_norm_backward(
            &d_b,
            d,
            &cache.ln2,
            &lp.ln2_gain,
            &mut g.ln2_gain,
            &mut g.ln2_bias,
            &mut dx,
        );

        // Attention branch: x += drop(Wo·attn(LN1(x)))
        let mut d_attn = dx.clone();
        if let Some(m) = &cache.drop_attn {
            mul(&mut d_attn, m);
        }
        let d_ctx = linear_backward(&cache.ctx, len, &lp.wo, &d_attn, &mut g.wo, &mut g.bo);
        let (dq, dk, dv) = attention_backward(cache, &d_ctx, len, d, c.n_heads);
        let mut d_a = linear_backward(&cache.a, len, &lp.wq, &dq, &mut g.wq, &mut g.bq);
        add(
            &mut d_a,
            &linear_backward(&cache.a, len, &lp.wk, &dk, &mut g.wk, &mut g.bk),
        );
        add(
            &mut d_a,
            &linear_backward(&cache.a, len, &lp.wv, &dv, &mut g.wv, &mut g.bv),
        );
        layer_norm_backward(
            &d_a,
            d,
            &cache.ln1,
            &lp.ln1_gain,
            &mut g.ln1_gain,
            &mut g.ln1_bias,
            &mut dx,
        );
    }

    if let Some(m) = &fwd.drop_embed {
        mul(&mut dx, m);
    }
    for (i, t) in fwd.tokens.iter().enumerate() {
        let gi = &dx[i * d..(i + 1) * d];
        let song_row = t.song.map_or(c.mask_row(), |s| s.0 as usize);
        add(grads.song.row_mut(song_row), gi);
        add(grads.station.row_mut(t.station.0 as usize), gi);
        if c.use_feedback {
            add(grads.feedback.row_mut(t.feedback.row()), gi);
        }
        if c.use_positional {
            add(grads.position.row_mut(t.position), gi);
        }
    }
}

#[inline]
fn add(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

#[inline]
fn mul(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a *= b;
    }
}
