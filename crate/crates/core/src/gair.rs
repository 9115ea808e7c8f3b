//! Generation-aided choice of the composition weight.
//!
//! For every weight on a grid the composed query is rendered into a few
//! previews; each preview is scored by the smaller of its mean similarity to
//! the concept images and its mean similarity to images generated from the
//! attribute-only query. The best-scoring weight wins, ties going to the
//! largest weight.

use serde::{Deserialize, Serialize};

use crate::backbone::Backbone;
use crate::diffusion::ImageGenerator;
use crate::embedding::TokenEmbedding;
use crate::encoder::{normalize, ConditionVector, ImageEncoder, PromptOrder, QueryComponents, TextEncoder};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::image::Image;
use crate::rng::derive_seed;
use crate::Vector;

const PREVIEW_STREAM: u64 = 0x6A1_0000;
const CONTEXT_STREAM: u64 = 0x6A1_C000;

/// `{0.0, 0.1, …, 1.0}`.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

pub const DEFAULT_PREVIEWS_PER_WEIGHT: usize = 4;

/// Seed of preview `j` at grid position `weight_index`.
pub fn preview_seed(seed: u64, weight_index: usize, j: usize) -> u64 {
    derive_seed(seed, PREVIEW_STREAM + weight_index as u64, j as u64)
}

/// Seed of context image `j`.
pub fn context_seed(seed: u64, j: usize) -> u64 {
    derive_seed(seed, CONTEXT_STREAM, j as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GairRequest {
    pub token_ref: String,
    /// Caption template `t` with a `{*}` slot and optionally `{c}`.
    pub caption: String,
    pub parent: String,
    pub attributes: Vec<String>,
    #[serde(default = "default_grid")]
    pub weight_grid: Vec<f64>,
    #[serde(default = "default_previews")]
    pub previews_per_weight: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_previews() -> usize {
    DEFAULT_PREVIEWS_PER_WEIGHT
}

impl GairRequest {
    pub fn validate(&self) -> Result<()> {
        if self.weight_grid.is_empty() {
            return Err(Error::NoWeights);
        }
        if self.weight_grid.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::InvalidGrid("weights must lie in [0, 1]".into()));
        }
        if self.weight_grid.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidGrid("weights must be strictly ascending".into()));
        }
        if self.previews_per_weight == 0 {
            return Err(Error::InvalidArgument("previews_per_weight must be at least 1".into()));
        }
        if self.attributes.is_empty() {
            return Err(Error::EmptyAttributes);
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GairResult {
    pub optimal_weight: f64,
    pub weight_grid: Vec<f64>,
    /// Aligned with `weight_grid`.
    pub per_weight_scores: Vec<f64>,
    /// `previews_per_weight` images per grid weight.
    pub preview_images: Vec<Vec<Image>>,
    pub context_images: Vec<Image>,
}

impl GairResult {
    pub fn optimal_index(&self) -> usize {
        self.weight_grid.iter().position(|&w| w == self.optimal_weight).expect("optimal weight is on the grid")
    }

    /// `w,score` lines with a header.
    pub fn score_curve_csv(&self) -> String {
        let mut out = String::from("w,score\n");
        for (w, s) in self.weight_grid.iter().zip(&self.per_weight_scores) {
            out.push_str(&format!("{w},{s}\n"));
        }
        out
    }
}

/// Frozen models a sweep needs.
#[derive(Clone, Copy)]
pub struct GairModels<'a> {
    pub text: &'a dyn TextEncoder,
    pub image: &'a dyn ImageEncoder,
    pub generator: &'a dyn ImageGenerator,
}

impl<'a> GairModels<'a> {
    pub fn from_backbone(backbone: &'a Backbone) -> Self {
        Self { text: backbone.text.as_ref(), image: backbone.image.as_ref(), generator: &backbone.diffusion }
    }
}

/// Index of the maximum, ties to the later (larger-weight) position.
pub fn argmax_last(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s >= scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// `m` images from the mean attribute query `(1/|A|) Σ g([t, a_i, c])`.
pub fn context_images(
    components: &QueryComponents,
    m: usize,
    seed: u64,
    generator: &dyn ImageGenerator,
    mode: Execution,
) -> Result<Vec<Image>> {
    let mean = components.attribute_mean.as_ref().ok_or(Error::EmptyAttributes)?;
    let cond = ConditionVector::raw(mean.clone());
    exec::try_map_range(mode, m, |j| generator.generate(&cond, context_seed(seed, j)))
}

fn mean_cosine(f: &Vector, refs: &[Vector]) -> f64 {
    refs.iter().map(|r| f.dot(r)).sum::<f64>() / refs.len() as f64
}

/// Runs the sweep. `references` are the concept images `x`.
pub fn run_gair(
    request: &GairRequest,
    token: &TokenEmbedding,
    references: &[Image],
    models: GairModels<'_>,
    mode: Execution,
) -> Result<GairResult> {
    request.validate()?;
    if references.is_empty() {
        return Err(Error::NoImages);
    }
    let components = QueryComponents::compute(
        &request.caption,
        token,
        &request.parent,
        &request.attributes,
        PromptOrder::default(),
        models.text,
    )?;
    let m = request.previews_per_weight;
    let unit = |img: &Image| normalize(&models.image.encode_image(img)?);
    let context = context_images(&components, m, request.seed, models.generator, mode)?;
    let object_refs = exec::try_map_slice(mode, references, unit)?;
    let context_refs = exec::try_map_slice(mode, &context, unit)?;
    let queries =
        request.weight_grid.iter().map(|&w| components.compose(w).map(|q| q.feature)).collect::<Result<Vec<_>>>()?;

    let cells = exec::try_map_range(mode, queries.len() * m, |k| {
        let (i, j) = (k / m, k % m);
        let preview = models.generator.generate(&queries[i], preview_seed(request.seed, i, j))?;
        let f = unit(&preview)?;
        let score = mean_cosine(&f, &object_refs).min(mean_cosine(&f, &context_refs));
        Ok::<_, Error>((preview, score))
    })?;

    let mut per_weight_scores = Vec::with_capacity(queries.len());
    let mut preview_images = Vec::with_capacity(queries.len());
    let mut cells = cells.into_iter();
    for _ in 0..queries.len() {
        let row: Vec<(Image, f64)> = cells.by_ref().take(m).collect();
        per_weight_scores.push(row.iter().map(|(_, s)| s).sum::<f64>() / m as f64);
        preview_images.push(row.into_iter().map(|(img, _)| img).collect());
    }
    let best = argmax_last(&per_weight_scores).expect("grid is non-empty");
    Ok(GairResult {
        optimal_weight: request.weight_grid[best],
        weight_grid: request.weight_grid.clone(),
        per_weight_scores,
        preview_images,
        context_images: context,
    })
}
