//! Request and response bodies of the HTTP API. Requests reject unknown
//! fields; every type publishes a JSON schema under `/schema`.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

fn default_weight() -> f64 {
    1.0
}

fn default_count() -> usize {
    4
}

/// Upper bound on images generated by one request.
pub const MAX_PREVIEWS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct IngestRequest {
    /// Parent word, e.g. "teapot".
    pub parent: String,
    /// Base64-encoded PNG files.
    pub images: Vec<String>,
    /// Manual attribute list; selected automatically when omitted.
    #[serde(default)]
    pub attributes: Option<Vec<String>>,
}

/// Overrides of the studio's base training settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub lambda_sd: Option<f64>,
    pub lambda_ce: Option<f64>,
    pub num_tokens: Option<usize>,
    pub batch_size: Option<usize>,
    pub negatives_k: Option<usize>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
    /// Train inside the attribute subspace (default true).
    pub projected: Option<bool>,
    /// Subspace rank; 0 or absent keeps the full affine span.
    pub subspace_rank: Option<usize>,
    /// Training caption with a `{*}` slot.
    pub caption: Option<String>,
    /// Captions sampled per step; defaults to `[caption]` or the built-in set.
    pub paraphrases: Option<Vec<String>>,
}

/// A composed query: `w·g([t,*,c]) + (1−w)·mean_a g([t,a,c])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub concept_id: String,
    /// Caption with a `{*}` slot and optionally `{c}`.
    #[serde(default)]
    pub caption: Option<String>,
    #[serde(default)]
    pub attributes: Vec<String>,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

impl QuerySpec {
    pub fn validate(&self) -> ApiResult<()> {
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(ApiError::BadRequest(format!("weight {} is outside [0, 1]", self.weight)));
        }
        if self.weight < 1.0 && self.attributes.is_empty() {
            return Err(ApiError::BadRequest("attributes are required when weight < 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AttributeComponent {
    pub attribute: String,
    pub fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ComposeComponents {
    /// Fingerprint of the unit token-prompt feature `g([t,*,c])`.
    pub token_fingerprint: String,
    pub attributes: Vec<AttributeComponent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ComposeResponse {
    pub concept_id: String,
    pub token_ref: String,
    pub caption: String,
    pub parent: String,
    pub weight: f64,
    pub attributes: Vec<String>,
    pub components: ComposeComponents,
    /// SHA-256 of the composed feature (f64 LE).
    pub feature_fingerprint: String,
    /// Fingerprint of the same query at `w = 1`.
    pub token_only_fingerprint: String,
    pub feature: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PreviewRequest {
    pub query: QuerySpec,
    /// Number of images; image `j` uses seed `seed + j`.
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ImageRef {
    pub id: String,
    /// Path of the PNG on this server.
    pub url: String,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PreviewResponse {
    pub feature_fingerprint: String,
    pub weight: f64,
    pub images: Vec<ImageRef>,
}

/// Exactly one of `query`, `text` and `feature` must be given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RetrieveRequest {
    pub index_id: String,
    #[serde(default)]
    pub query: Option<QuerySpec>,
    /// Plain text query without a custom token.
    #[serde(default)]
    pub text: Option<String>,
    /// Raw query feature in the joint space.
    #[serde(default)]
    pub feature: Option<Vec<f64>>,
    #[serde(default)]
    pub offset: usize,
    #[serde(default)]
    pub limit: Option<usize>,
}

impl RetrieveRequest {
    pub fn validate(&self) -> ApiResult<()> {
        let given = [self.query.is_some(), self.text.is_some(), self.feature.is_some()].iter().filter(|&&b| b).count();
        if given != 1 {
            return Err(ApiError::BadRequest("exactly one of query, text or feature is required".into()));
        }
        if let Some(q) = &self.query {
            q.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Hit {
    /// 1-based.
    pub rank: usize,
    pub id: String,
    pub score: f64,
    pub label: Option<String>,
    pub image_url: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RetrieveResponse {
    pub index_id: String,
    pub total: usize,
    pub offset: usize,
    pub results: Vec<Hit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GairRequestBody {
    pub concept_id: String,
    #[serde(default)]
    pub caption: Option<String>,
    pub attributes: Vec<String>,
    /// Strictly ascending weights in `[0, 1]`; defaults to `0.0, 0.1, …, 1.0`.
    #[serde(default)]
    pub weight_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub previews_per_weight: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Run as a job and return it instead of waiting for the result.
    #[serde(default, rename = "async")]
    pub run_async: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GairResponse {
    pub concept_id: String,
    pub optimal_weight: f64,
    pub weight_grid: Vec<f64>,
    /// Aligned with `weight_grid`.
    pub per_weight_scores: Vec<f64>,
    /// Preview images per grid weight.
    pub previews: Vec<Vec<ImageRef>>,
    pub context_images: Vec<ImageRef>,
    /// `w,score` lines with a header.
    pub curve_csv: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct IndexItemBody {
    pub id: String,
    /// Base64-encoded PNG.
    pub image: String,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct IndexRequest {
    pub items: Vec<IndexItemBody>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct IndexEntryInfo {
    pub id: String,
    pub label: Option<String>,
    pub image_url: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct IndexInfo {
    pub id: String,
    pub dim: usize,
    pub count: usize,
    pub encoder_checksum: String,
    pub entries: Vec<IndexEntryInfo>,
}

pub fn image_url(hash: &str) -> String {
    format!("/images/{hash}")
}

pub fn preview_url(hash: &str) -> String {
    format!("/previews/{hash}")
}
