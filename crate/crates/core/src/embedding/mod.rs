//! Custom-token embeddings, the attribute subspace they are constrained to,
//! and the diagnostics used to compare them with ordinary word embeddings.

mod diagnostics;
mod select;
mod subspace;

pub use diagnostics::{affinity, norm_report, AffinityReport, NormReport, DEFAULT_AFFINITY_CLIP};
pub use select::{select_attributes, DEFAULT_TOP_N};
pub use subspace::{
    build_subspace, default_rank, project, AttributeSubspace, SubspaceDocument, SubspaceSource, DROP_TOLERANCE,
    RELATIVE_DROP_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::encoder::TextEncoder;
use crate::error::{Error, Result};
use crate::Vector;

/// The learned rows `e_*` of a custom token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenEmbedding {
    pub concept_id: String,
    pub parent_concept: String,
    vectors: Vec<Vector>,
    pub subspace_id: Option<String>,
    pub is_projected: bool,
    pub training_fingerprint: String,
}

impl TokenEmbedding {
    pub fn new(
        concept_id: impl Into<String>,
        parent_concept: impl Into<String>,
        vectors: Vec<Vector>,
        subspace_id: Option<String>,
        is_projected: bool,
        training_fingerprint: impl Into<String>,
    ) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(Error::DegenerateInput("a token needs at least one row".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::DegenerateInput("zero-width token rows".into()));
        }
        for v in &vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::DegenerateInput("token row has non-finite entries".into()));
            }
        }
        Ok(Self {
            concept_id: concept_id.into(),
            parent_concept: parent_concept.into(),
            vectors,
            subspace_id,
            is_projected,
            training_fingerprint: training_fingerprint.into(),
        })
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }

    pub fn num_tokens(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    /// Average of the `k` rows.
    pub fn mean_row(&self) -> Vector {
        let mut sum = Vector::zeros(self.dim());
        for v in &self.vectors {
            sum += v;
        }
        sum / self.vectors.len() as f64
    }

    /// Largest `|project(v) − v| / max(1, |v|)` over the rows.
    pub fn projection_residual(&self, subspace: &AttributeSubspace) -> Result<f64> {
        let mut worst = 0.0f64;
        for v in &self.vectors {
            let p = project(v, subspace)?;
            worst = worst.max((p - v).norm() / v.norm().max(1.0));
        }
        Ok(worst)
    }
}

/// Mean of the sub-token embedding rows of `attribute`.
pub fn attribute_embedding(attribute: &str, encoder: &dyn TextEncoder) -> Result<Vector> {
    let ids = encoder.tokenize(attribute)?;
    if ids.is_empty() {
        return Err(Error::UnknownToken(attribute.to_string()));
    }
    let rows = encoder.embed(&ids)?;
    let mut sum = Vector::zeros(encoder.embed_dim());
    for r in &rows {
        sum += r;
    }
    Ok(sum / rows.len() as f64)
}
