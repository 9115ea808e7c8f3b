use serde::{Deserialize, Serialize};

use super::TokenEmbedding;
use crate::error::{Error, Result};
use crate::Vector;

/// Display clipping value for affinity heatmaps.
pub const DEFAULT_AFFINITY_CLIP: f64 = 0.4;

/// Pairwise cosine similarities between labeled embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinityReport {
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub clip_at: f64,
}

pub fn affinity(labeled: &[(String, Vector)]) -> Result<AffinityReport> {
    if labeled.len() < 2 {
        return Err(Error::InvalidArgument("affinity needs at least two vectors".into()));
    }
    let dim = labeled[0].1.len();
    let mut units = Vec::with_capacity(labeled.len());
    for (_, v) in labeled {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
        let n = v.norm();
        if !(n > 0.0) {
            return Err(Error::ZeroVector);
        }
        units.push(v / n);
    }
    let n = units.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        matrix[i][i] = 1.0;
        for j in (i + 1)..n {
            let c = units[i].dot(&units[j]).clamp(-1.0, 1.0);
            matrix[i][j] = c;
            matrix[j][i] = c;
        }
    }
    Ok(AffinityReport {
        labels: labeled.iter().map(|(l, _)| l.clone()).collect(),
        matrix,
        clip_at: DEFAULT_AFFINITY_CLIP,
    })
}

/// Attribute-norm distribution versus the learned token's norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub per_attribute_norms: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Mean of the per-row norms of the learned token.
    pub learned_token_norm: f64,
    pub learned_row_norms: Vec<f64>,
    /// Norm of the averaged learned row.
    pub learned_mean_row_norm: f64,
}

impl NormReport {
    /// `(learned_token_norm − mean) / std`; infinite when `std == 0` and the norms differ.
    pub fn learned_z_score(&self) -> f64 {
        let diff = self.learned_token_norm - self.mean;
        if self.std == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY * diff.signum()
            }
        } else {
            diff / self.std
        }
    }

    pub fn learned_to_mean_ratio(&self) -> f64 {
        self.learned_token_norm / self.mean
    }
}

pub fn norm_report(attribute_vectors: &[Vector], learned: &TokenEmbedding) -> Result<NormReport> {
    if attribute_vectors.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dim = learned.dim();
    for v in attribute_vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
    }
    let norms: Vec<f64> = attribute_vectors.iter().map(|v| v.norm()).collect();
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let std = (norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let row_norms: Vec<f64> = learned.vectors().iter().map(|v| v.norm()).collect();
    let learned_token_norm = row_norms.iter().sum::<f64>() / row_norms.len() as f64;
    Ok(NormReport {
        per_attribute_norms: norms,
        mean,
        std,
        learned_token_norm,
        learned_row_norms: row_norms,
        learned_mean_row_norm: learned.mean_row().norm(),
    })
}
