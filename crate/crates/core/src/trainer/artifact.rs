//! Token artifact file: JSON with a float32-LE base64 row block.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LossBreakdown;
use crate::embedding::{AttributeSubspace, SubspaceDocument, TokenEmbedding};
use crate::error::{Error, Result};
use crate::format::{decode_f32_base64, encode_f32_base64};
use crate::Vector;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMetrics {
    #[serde(default)]
    pub final_losses: Option<LossBreakdown>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenArtifact {
    pub version: u32,
    pub concept_id: String,
    pub parent: String,
    pub dim: usize,
    pub num_tokens: usize,
    /// `num_tokens × dim`, row-major.
    pub vectors: String,
    #[serde(default)]
    pub subspace: Option<SubspaceDocument>,
    #[serde(default)]
    pub subspace_id: Option<String>,
    pub is_projected: bool,
    pub config_fingerprint: String,
    #[serde(default)]
    pub metrics: ArtifactMetrics,
}

impl TokenArtifact {
    pub fn new(token: &TokenEmbedding, subspace: Option<&AttributeSubspace>, metrics: ArtifactMetrics) -> Self {
        let flat: Vec<f64> = token.vectors().iter().flat_map(|v| v.iter().copied()).collect();
        Self {
            version: ARTIFACT_VERSION,
            concept_id: token.concept_id.clone(),
            parent: token.parent_concept.clone(),
            dim: token.dim(),
            num_tokens: token.num_tokens(),
            vectors: encode_f32_base64(&flat),
            subspace: subspace.map(AttributeSubspace::to_document),
            subspace_id: token.subspace_id.clone(),
            is_projected: token.is_projected,
            config_fingerprint: token.training_fingerprint.clone(),
            metrics,
        }
    }

    pub fn token(&self) -> Result<TokenEmbedding> {
        if self.version != ARTIFACT_VERSION {
            return Err(Error::Format(format!("unsupported token artifact version {}", self.version)));
        }
        let flat = decode_f32_base64(&self.vectors, self.num_tokens * self.dim)?;
        let rows = flat.chunks(self.dim.max(1)).map(Vector::from_column_slice).collect();
        TokenEmbedding::new(
            self.concept_id.clone(),
            self.parent.clone(),
            rows,
            self.subspace_id.clone(),
            self.is_projected,
            self.config_fingerprint.clone(),
        )
    }

    pub fn subspace(&self) -> Result<Option<AttributeSubspace>> {
        self.subspace.as_ref().map(AttributeSubspace::from_document).transpose()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
