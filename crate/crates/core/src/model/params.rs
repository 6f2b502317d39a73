use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::rng::{rng_for, stream};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn random<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| normal.sample(rng)).collect(),
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub wq: Matrix,
    pub bq: Vec<f64>,
    pub wk: Matrix,
    pub bk: Vec<f64>,
    pub wv: Matrix,
    pub bv: Vec<f64>,
    pub wo: Matrix,
    pub bo: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl LayerParams {
    fn zeros(d: usize, d_ff: usize) -> Self {
        LayerParams {
            ln1_gain: vec![0.0; d],
            ln1_bias: vec![0.0; d],
            wq: Matrix::zeros(d, d),
            bq: vec![0.0; d],
            wk: Matrix::zeros(d, d),
            bk: vec![0.0; d],
            wv: Matrix::zeros(d, d),
            bv: vec![0.0; d],
            wo: Matrix::zeros(d, d),
            bo: vec![0.0; d],
            ln2_gain: vec![0.0; d],
            ln2_bias: vec![0.0; d],
            w1: Matrix::zeros(d, d_ff),
            b1: vec![0.0; d_ff],
            w2: Matrix::zeros(d_ff, d),
            b2: vec![0.0; d],
        }
    }
}

/// All trainable tensors. Also used as the gradient container: a gradient
/// set is a `ModelParams` of the same shape.
///
/// The song table has `catalog_size + 1` rows, the last being the mask
/// token; it doubles as the output table (tied weights). Station row 0 is
/// the null station. Feedback rows follow [`crate::data::FeedbackType::row`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub song: Matrix,
    pub station: Matrix,
    pub feedback: Matrix,
    pub position: Matrix,
    pub layers: Vec<LayerParams>,
    pub final_gain: Vec<f64>,
    pub final_bias: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        ModelParams {
            config: config.clone(),
            song: Matrix::zeros(config.catalog_size + 1, d),
            station: Matrix::zeros(config.station_count + 1, d),
            feedback: Matrix::zeros(4, d),
            position: Matrix::zeros(config.max_len, d),
            layers: (0..config.n_layers)
                .map(|_| LayerParams::zeros(d, config.ff_dim()))
                .collect(),
            final_gain: vec![0.0; d],
            final_bias: vec![0.0; d],
        }
    }

    /// Gaussian embeddings, scaled-Gaussian projections, unit layer-norm
    /// gains and zero biases, all from `config.seed`.
    pub fn init(config: &ModelConfig) -> Self {
        let mut rng = rng_for(config.seed, &[stream::INIT]);
        let d = config.d_model;
        let ff = config.ff_dim();
        let e = config.init_std;
        let proj = |rows: usize, cols: usize, rng: &mut _| {
            Matrix::random(rows, cols, (2.0 / (rows + cols) as f64).sqrt(), rng)
        };
        let song = Matrix::random(config.catalog_size + 1, d, e, &mut rng);
        let station = Matrix::random(config.station_count + 1, d, e, &mut rng);
        let feedback = Matrix::random(4, d, e, &mut rng);
        let position = Matrix::random(config.max_len, d, e, &mut rng);
        let layers = (0..config.n_layers)
            .map(|_| {
                let mut l = LayerParams::zeros(d, ff);
                l.ln1_gain.fill(1.0);
                l.ln2_gain.fill(1.0);
                l.wq = proj(d, d, &mut rng);
                l.wk = proj(d, d, &mut rng);
                l.wv = proj(d, d, &mut rng);
                l.wo = proj(d, d, &mut rng);
                l.w1 = proj(d, ff, &mut rng);
                l.w2 = proj(ff, d, &mut rng);
                l
            })
            .collect();
        ModelParams {
            config: config.clone(),
            song,
            station,
            feedback,
            position,
            layers,
            final_gain: vec![1.0; d],
            final_bias: vec![0.0; d],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Tensor names in [`Self::tensors`] order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["song", "station", "feedback", "position"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for i in 0..self.layers.len() {
            for t in [
                "ln1_gain", "ln1_bias", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln2_gain", "ln2_bias", "w1",
                "b1", "w2", "b2",
            ] {
                names.push(format!("layer{i}.{t}"));
            }
        }
        names.push("final_gain".into());
        names.push("final_bias".into());
        names
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            &self.song.data,
            &self.station.data,
            &self.feedback.data,
            &self.position.data,
        ];
        for l in &self.layers {
            out.extend([
                &l.ln1_gain[..],
                &l.ln1_bias,
                &l.wq.data,
                &l.bq,
                &l.wk.data,
                &l.bk,
                &l.wv.data,
                &l.bv,
                &l.wo.data,
                &l.bo,
                &l.ln2_gain,
                &l.ln2_bias,
                &l.w1.data,
                &l.b1,
                &l.w2.data,
                &l.b2,
            ]);
        }
        out.push(&self.final_gain);
        out.push(&self.final_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            &mut self.song.data,
            &mut self.station.data,
            &mut self.feedback.data,
            &mut self.position.data,
        ];
        for l in &mut self.layers {
            out.extend([
                &mut l.ln1_gain[..],
                &mut l.ln1_bias,
                &mut l.wq.data,
                &mut l.bq,
                &mut l.wk.data,
                &mut l.bk,
                &mut l.wv.data,
                &mut l.bv,
                &mut l.wo.data,
                &mut l.bo,
                &mut l.ln2_gain,
                &mut l.ln2_bias,
                &mut l.w1.data,
                &mut l.b1,
                &mut l.w2.data,
                &mut l.b2,
            ]);
        }
        out.push(&mut self.final_gain);
        out.push(&mut self.final_bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|x| x * x).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}
