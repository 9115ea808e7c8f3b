//! Dual-encoder contract: a frozen text encoder `g` over token-embedding
//! rows, a frozen image encoder `f`, cosine scoring, and prompt assembly
//! with custom-token injection.

mod compose;
mod prompt;

pub use compose::{compose_query, ComposedQuery, QueryComponents};
pub use prompt::{
    assemble, assemble_with, default_paraphrases, PromptOrder, PromptTemplate, SlotFill, TokenPiece, TokenSequence,
    PARENT_SLOT, TOKEN_SLOT,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::Vector;

/// A feature in the joint text/image space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionVector {
    pub values: Vector,
    pub normalized: bool,
}

impl ConditionVector {
    pub fn raw(values: Vector) -> Self {
        Self { values, normalized: false }
    }

    /// Unit-normalized copy of `values`.
    pub fn unit(values: &Vector) -> Result<Self> {
        Ok(Self { values: normalize(values)?, normalized: true })
    }

    pub fn to_unit(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        Self::unit(&self.values)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn normalize(v: &Vector) -> Result<Vector> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v / n)
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let na = a.norm();
    let nb = b.norm();
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Text–image score: dot product of the unit-normalized features.
pub fn score(text_feature: &ConditionVector, image_feature: &ConditionVector) -> Result<f64> {
    cosine(&text_feature.values, &image_feature.values)
}

/// Gradient of `u = v / |v|` pulled back from `grad_u` to `v`.
pub fn normalize_vjp(v: &Vector, grad_u: &Vector) -> Vector {
    let n = v.norm();
    let u = v / n;
    (grad_u - &u * u.dot(grad_u)) / n
}

/// Frozen text encoder operating on token-embedding rows.
///
/// `encode_rows` must be a deterministic function of its rows; `rows_vjp`
/// returns the gradient of `<grad, encode_rows(rows)>` w.r.t. each row.
pub trait TextEncoder: Send + Sync {
    /// Token-embedding width.
    fn embed_dim(&self) -> usize;
    /// Output feature width (the joint space).
    fn dim(&self) -> usize;
    fn context_len(&self) -> usize;
    fn tokenize(&self, text: &str) -> Result<Vec<u32>>;
    fn embed(&self, ids: &[u32]) -> Result<Vec<Vector>>;
    fn encode_rows(&self, rows: &[Vector]) -> Result<Vector>;
    fn rows_vjp(&self, rows: &[Vector], grad: &Vector) -> Result<Vec<Vector>>;
    /// Checksum over the frozen parameters.
    fn parameter_checksum(&self) -> String;
}

/// Frozen image encoder.
pub trait ImageEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode_image(&self, image: &Image) -> Result<Vector>;
    fn parameter_checksum(&self) -> String;
}

/// Materializes a token sequence into embedding rows.
pub fn sequence_rows(encoder: &dyn TextEncoder, sequence: &TokenSequence) -> Result<Vec<Vector>> {
    let mut rows = Vec::with_capacity(sequence.len());
    for piece in sequence.pieces() {
        match piece {
            TokenPiece::Vocab(id) => rows.extend(encoder.embed(&[*id])?),
            TokenPiece::Injected { row, .. } => {
                if row.len() != encoder.embed_dim() {
                    return Err(Error::DimensionMismatch { expected: encoder.embed_dim(), got: row.len() });
                }
                rows.push(row.clone())
            }
        }
    }
    Ok(rows)
}

pub fn encode_text(encoder: &dyn TextEncoder, sequence: &TokenSequence) -> Result<ConditionVector> {
    if sequence.len() > encoder.context_len() {
        return Err(Error::SequenceTooLong { len: sequence.len(), max: encoder.context_len() });
    }
    let rows = sequence_rows(encoder, sequence)?;
    Ok(ConditionVector::raw(encoder.encode_rows(&rows)?))
}

/// Gradient of `<grad, g(sequence)>` w.r.t. the injected rows, in slot order.
pub fn encode_text_vjp(encoder: &dyn TextEncoder, sequence: &TokenSequence, grad: &Vector) -> Result<Vec<Vector>> {
    let rows = sequence_rows(encoder, sequence)?;
    let all = encoder.rows_vjp(&rows, grad)?;
    Ok(sequence
        .pieces()
        .iter()
        .zip(all)
        .filter(|(p, _)| matches!(p, TokenPiece::Injected { .. }))
        .map(|(_, g)| g)
        .collect())
}

/// Encodes plain text (no custom token).
pub fn encode_plain_text(encoder: &dyn TextEncoder, text: &str) -> Result<ConditionVector> {
    let ids = encoder.tokenize(text)?;
    encode_text(encoder, &TokenSequence::from_ids(&ids))
}

pub fn encode_image(encoder: &dyn ImageEncoder, image: &Image) -> Result<ConditionVector> {
    Ok(ConditionVector::raw(encoder.encode_image(image)?))
}
