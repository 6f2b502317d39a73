use serde::{Deserialize, Serialize};

use crate::data::FeedbackType;
use crate::model::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.values[i][j])
    }
}

/// Cosine similarity; zero vectors are treated as orthogonal to everything
/// except themselves.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return if na == nb && a == b { 1.0 } else { 0.0 };
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Pairwise cosine similarity between the learned feedback-type embeddings.
pub fn feedback_similarity(params: &ModelParams, types: &[FeedbackType]) -> SimilarityMatrix {
    let rows: Vec<&[f64]> = types.iter().map(|t| params.feedback.row(t.row())).collect();
    let values = rows
        .iter()
        .enumerate()
        .map(|(i, a)| {
            rows.iter()
                .enumerate()
                .map(|(j, b)| {
                    if i == j && a.iter().any(|&x| x != 0.0) {
                        1.0
                    } else {
                        cosine_similarity(a, b)
                    }
                })
                .collect()
        })
        .collect();
    SimilarityMatrix {
        labels: types.iter().map(|t| t.as_str().to_string()).collect(),
        values,
    }
}
