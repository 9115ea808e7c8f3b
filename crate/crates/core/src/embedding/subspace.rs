use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::attribute_embedding;
use crate::encoder::TextEncoder;
use crate::error::{Error, Result};
use crate::format::{decode_f32_base64, encode_f32_base64, sha256_hex};
use crate::Vector;

/// Principal directions with singular value below this are dropped.
pub const DROP_TOLERANCE: f64 = 1e-10;

/// Directions weaker than this fraction of the strongest one are treated as
/// numerically zero (covariance eigenvalues carry rounding noise of order
/// `ε·λ_max`).
pub const RELATIVE_DROP_TOLERANCE: f64 = 1e-6;

const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceSource {
    #[default]
    Manual,
    CorrelationSelected,
}

/// Affine subspace `mean + span(basis rows)` of attribute embeddings.
///
/// The projection operator is `P = basisᵀ·basis`; rows of `basis` are
/// orthonormal and ordered by descending explained variance (population
/// convention, divide by `n`).
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeSubspace {
    pub attributes: Vec<String>,
    pub mean: Vector,
    /// `r × d`.
    pub basis: DMatrix<f64>,
    pub source: SubspaceSource,
    /// Variance explained by each retained direction.
    pub explained_variance: Vec<f64>,
    /// Non-fatal notes from construction, e.g. dropped degenerate directions.
    pub warnings: Vec<String>,
}

/// `min(count − 1, d)`: keeps the whole affine span of the attributes.
pub fn default_rank(count: usize, dim: usize) -> usize {
    count.saturating_sub(1).min(dim)
}

/// PCA over `vectors`: mean plus the top-`rank` principal directions.
pub fn build_subspace(vectors: &[Vector], rank: usize) -> Result<AttributeSubspace> {
    let Some(first) = vectors.first() else {
        return Err(Error::DegenerateInput("no attribute vectors".into()));
    };
    let dim = first.len();
    let count = vectors.len();
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateInput("attribute vector has non-finite entries".into()));
        }
    }
    let max = count.min(dim);
    if rank > max {
        return Err(Error::RankTooLarge { rank, max, count, dim });
    }

    let mut mean = Vector::zeros(dim);
    for v in vectors {
        mean += v;
    }
    mean /= count as f64;

    let centered = DMatrix::from_fn(count, dim, |i, j| vectors[i][j] - mean[j]);
    let mut warnings = Vec::new();
    let mut rows: Vec<Vector> = Vec::new();
    let mut explained = Vec::new();
    if rank > 0 {
        // Eigenvectors of the covariance; nalgebra's SVD can return a
        // leading singular vector that is off by far more than rounding.
        let covariance = centered.tr_mul(&centered) / count as f64;
        let eig = SymmetricEigen::new(covariance);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let sigma = |i: usize| (eig.eigenvalues[i].max(0.0) * count as f64).sqrt();
        let cutoff = DROP_TOLERANCE.max(RELATIVE_DROP_TOLERANCE * sigma(order[0]));
        for &i in order.iter().take(rank) {
            if sigma(i) < cutoff {
                continue;
            }
            let mut dir: Vector = eig.eigenvectors.column(i).into_owned();
            // Canonical sign: largest-magnitude entry positive.
            let pivot = dir.iamax();
            if dir[pivot] < 0.0 {
                dir = -dir;
            }
            rows.push(dir);
            explained.push(eig.eigenvalues[i]);
        }
        if rows.len() < rank {
            let msg = format!(
                "requested rank {rank} but only {} directions have singular value >= {cutoff:e}; rank reduced",
                rows.len()
            );
            warn!("{msg}");
            warnings.push(msg);
        }
    }

    let basis =
        if rows.is_empty() { DMatrix::zeros(0, dim) } else { DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]) };
    Ok(AttributeSubspace {
        attributes: Vec::new(),
        mean,
        basis,
        source: SubspaceSource::Manual,
        explained_variance: explained,
        warnings,
    })
}

/// `basisᵀ·basis·(v − mean) + mean`.
pub fn project(v: &Vector, subspace: &AttributeSubspace) -> Result<Vector> {
    if v.len() != subspace.dim() {
        return Err(Error::DimensionMismatch { expected: subspace.dim(), got: v.len() });
    }
    let centered = v - &subspace.mean;
    let coords = &subspace.basis * centered;
    Ok(subspace.basis.tr_mul(&coords) + &subspace.mean)
}

impl AttributeSubspace {
    /// Embeds each attribute (averaging sub-tokens) and runs PCA.
    /// `rank = None` uses [`default_rank`].
    pub fn from_attributes(
        attributes: &[String],
        encoder: &dyn TextEncoder,
        rank: Option<usize>,
        source: SubspaceSource,
    ) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::EmptyAttributes);
        }
        let vectors = attributes.iter().map(|a| attribute_embedding(a, encoder)).collect::<Result<Vec<_>>>()?;
        let rank = rank.unwrap_or_else(|| default_rank(vectors.len(), encoder.embed_dim()));
        let mut s = build_subspace(&vectors, rank)?;
        s.attributes = attributes.to_vec();
        s.source = source;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.basis.nrows()
    }

    /// Applies the linear part `P = basisᵀ·basis` (no mean shift). This is
    /// also the Jacobian of [`project`], used to pull gradients back.
    pub fn apply_linear(&self, g: &Vector) -> Vector {
        self.basis.tr_mul(&(&self.basis * g))
    }

    /// Largest deviation of `basis·basisᵀ` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = &self.basis * self.basis.transpose();
        let r = gram.nrows();
        let mut worst = 0.0f64;
        for i in 0..r {
            for j in 0..r {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// JSON document: `{version, attributes, dim, rank, mean, basis, source}`
    /// with float32-LE base64 blocks (basis row-major).
    pub fn to_document(&self) -> SubspaceDocument {
        let basis_row_major: Vec<f64> = (0..self.rank())
            .flat_map(|i| (0..self.dim()).map(move |j| (i, j)))
            .map(|(i, j)| self.basis[(i, j)])
            .collect();
        SubspaceDocument {
            version: FORMAT_VERSION,
            attributes: self.attributes.clone(),
            dim: self.dim(),
            rank: self.rank(),
            mean: encode_f32_base64(self.mean.iter()),
            basis: encode_f32_base64(&basis_row_major),
            source: self.source,
        }
    }

    pub fn from_document(doc: &SubspaceDocument) -> Result<Self> {
        if doc.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported subspace version {}", doc.version)));
        }
        let mean = Vector::from_vec(decode_f32_base64(&doc.mean, doc.dim)?);
        let flat = decode_f32_base64(&doc.basis, doc.rank * doc.dim)?;
        let basis = DMatrix::from_row_slice(doc.rank, doc.dim, &flat);
        Ok(Self {
            attributes: doc.attributes.clone(),
            mean,
            basis,
            source: doc.source,
            explained_variance: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }

    /// Content hash of the serialized document.
    pub fn id(&self) -> String {
        let doc = serde_json::to_vec(&self.to_document()).expect("subspace document serializes");
        sha256_hex(&doc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceDocument {
    pub version: u32,
    pub attributes: Vec<String>,
    pub dim: usize,
    pub rank: usize,
    pub mean: String,
    pub basis: String,
    #[serde(default)]
    pub source: SubspaceSource,
}
