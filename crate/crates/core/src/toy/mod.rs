//! Desk-scale reference backbone.
//!
//! A small closed world (shapes, colours, backgrounds) with:
//! - a mean-of-embeddings text encoder through a fixed random linear map,
//! - a patch-mean image encoder through a fixed random linear map plus a
//!   shared offset (image features sit in a cone away from text features,
//!   as in contrastive dual encoders),
//! - a pooling latent codec,
//! - a two-layer conditional denoiser whose second conditioning layer is
//!   fitted by ridge regression on rendered caption/scene pairs, so that
//!   `d(g("a photo of a red square"))` produces red squares.
//!
//! Everything is derived from one seed.

pub mod render;
mod text;
mod vision;
pub mod vocab;

pub use render::{parent_images, render, Fill, Scene, Shape, ToyConcept};
pub use text::ToyTextEncoder;
pub use vision::ToyImageEncoder;

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{ConditionalMeanDenoiser, LatentCodec, NoiseSchedule, PoolingCodec};
use crate::encoder::{encode_plain_text, normalize, TextEncoder};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{derive_seed, standard_normal, stream};
use crate::Vector;

/// Tunable sizes of the toy world. All fields have defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyParams {
    pub embed_dim: usize,
    pub dim: usize,
    pub context_len: usize,
    pub patch: u32,
    pub hidden: usize,
    /// Word-embedding norms are drawn uniformly from this range.
    pub embed_norm_range: [f64; 2],
    /// Scale of the caption-aligned part of the image map.
    pub image_gain: f64,
    /// Scale of a random part carrying visual detail that captions do not describe.
    pub image_detail: f64,
    /// Norm of the shared image-feature offset.
    pub modality_offset: f64,
    pub hidden_gain: f64,
    pub fit_samples: usize,
    pub ridge: f64,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            dim: 32,
            context_len: 48,
            patch: 4,
            hidden: 256,
            embed_norm_range: [0.6, 1.4],
            image_gain: 3.0,
            image_detail: 1.0,
            modality_offset: 2.0,
            hidden_gain: 4.0,
            fit_samples: 3000,
            ridge: 1e-2,
        }
    }
}

/// Concrete toy components.
#[derive(Clone, Debug)]
pub struct ToyBackbone {
    pub text: Arc<ToyTextEncoder>,
    pub image: Arc<ToyImageEncoder>,
    pub codec: Arc<PoolingCodec>,
    pub denoiser: Arc<ConditionalMeanDenoiser>,
    pub schedule: NoiseSchedule,
}

fn gaussian_matrix(rows: usize, cols: usize, scale: f64, seed: u64) -> DMatrix<f64> {
    let flat = standard_normal(&mut stream(seed), rows * cols);
    DMatrix::from_column_slice(rows, cols, flat.as_slice()) * scale
}

impl ToyBackbone {
    pub fn build(params: &ToyParams, seed: u64, latent_side: u32, train_steps: usize) -> Result<Self> {
        if params.embed_dim == 0 || params.dim == 0 || params.hidden == 0 {
            return Err(Error::InvalidConfig("toy dimensions must be positive".into()));
        }
        let image_side = latent_side * 2;
        if !image_side.is_multiple_of(params.patch) {
            return Err(Error::InvalidConfig(format!(
                "image side {image_side} is not a multiple of patch {}",
                params.patch
            )));
        }
        let [lo, hi] = params.embed_norm_range;
        if !(0.0 < lo && lo <= hi) {
            return Err(Error::InvalidConfig("embed_norm_range must satisfy 0 < lo <= hi".into()));
        }

        let words: Vec<String> = vocab::vocabulary().into_iter().map(String::from).collect();
        let mut rng = stream(derive_seed(seed, 1, 0));
        let embeddings: Vec<Vector> = words
            .iter()
            .map(|_| {
                let dir = normalize(&standard_normal(&mut rng, params.embed_dim)).expect("gaussian draw is nonzero");
                let norm = if hi > lo { rng.random_range(lo..hi) } else { lo };
                dir * norm
            })
            .collect();
        let text_proj = gaussian_matrix(
            params.dim,
            params.embed_dim,
            1.0 / (params.embed_dim as f64).sqrt(),
            derive_seed(seed, 2, 0),
        );
        let text = Arc::new(ToyTextEncoder::new(words, embeddings, text_proj, params.context_len));

        let codec = Arc::new(PoolingCodec::new(image_side, 2));
        let schedule = NoiseSchedule::linear(train_steps, 1e-4, 0.02)?;
        let w_in = gaussian_matrix(
            params.hidden,
            params.dim,
            params.hidden_gain / (params.dim as f64).sqrt(),
            derive_seed(seed, 5, 0),
        );
        let b_in = standard_normal(&mut stream(derive_seed(seed, 6, 0)), params.hidden) * 0.1;

        let pairs = caption_pairs(text.as_ref(), params.fit_samples.max(1), image_side, seed)?;
        let patch_features: Vec<Vector> =
            pairs.iter().map(|(_, img)| vision::patch_means(img, image_side, params.patch)).collect();
        let text_targets: Vec<Vector> = pairs.iter().map(|(cond, _)| cond.clone()).collect();
        let (aligned, fitted_bias, _) = ridge(&patch_features, &text_targets, params.ridge)?;
        let patch_mean = patch_features.iter().fold(Vector::zeros(patch_features[0].len()), |acc, p| acc + p)
            / patch_features.len() as f64;
        let detail = gaussian_matrix(
            params.dim,
            patch_mean.len(),
            1.0 / (patch_mean.len() as f64).sqrt(),
            derive_seed(seed, 3, 0),
        );
        // Centred around the average image: f(x) = A(p − p̄) + f̄.
        let image_proj = &aligned * params.image_gain + detail * params.image_detail;
        let center = &aligned * &patch_mean + fitted_bias;
        let offset = normalize(&standard_normal(&mut stream(derive_seed(seed, 4, 0)), params.dim)).expect("nonzero")
            * params.modality_offset;
        let image_bias = center + offset - &image_proj * &patch_mean;
        let image = Arc::new(ToyImageEncoder::new(image_side, params.patch, image_proj, image_bias));

        let hidden: Vec<Vector> = pairs.iter().map(|(cond, _)| (&w_in * cond + &b_in).map(f64::tanh)).collect();
        let latents: Vec<Vector> = pairs.iter().map(|(_, img)| codec.encode(img)).collect();
        let (w_out, b_out, variance) = ridge(&hidden, &latents, params.ridge)?;
        let denoiser =
            Arc::new(ConditionalMeanDenoiser::new(schedule.clone(), w_in, b_in, w_out, b_out, variance.max(1e-4)));
        Ok(Self { text, image, codec, denoiser, schedule })
    }
}

/// Unit caption features paired with the rendered scene.
fn caption_pairs(text: &dyn TextEncoder, n: usize, side: u32, seed: u64) -> Result<Vec<(Vector, Image)>> {
    let mut rng = stream(derive_seed(seed, 7, 0));
    (0..n)
        .map(|_| {
            let (caption, scene) = render::captioned_scene(&mut rng);
            let cond = normalize(&encode_plain_text(text, &caption)?.values)?;
            Ok((cond, render(&scene, side)))
        })
        .collect()
}

/// Least squares `y ≈ W x + b` with an L2 penalty on `W`; also returns the
/// mean squared residual per output entry.
fn ridge(inputs: &[Vector], targets: &[Vector], penalty: f64) -> Result<(DMatrix<f64>, Vector, f64)> {
    let n = inputs.len();
    let h = inputs[0].len();
    let out = targets[0].len();
    let features = DMatrix::from_fn(n, h + 1, |i, j| if j < h { inputs[i][j] } else { 1.0 });
    let y = DMatrix::from_fn(n, out, |i, j| targets[i][j]);
    let mut gram = features.tr_mul(&features);
    for j in 0..h {
        gram[(j, j)] += penalty * n as f64;
    }
    let rhs = features.tr_mul(&y);
    let chol = gram.cholesky().ok_or_else(|| Error::DegenerateInput("ridge normal equations are singular".into()))?;
    let beta = chol.solve(&rhs);
    let residual = &features * &beta - &y;
    let variance = residual.norm_squared() / (n * out) as f64;
    Ok((beta.rows(0, h).transpose(), beta.row(h).transpose(), variance))
}

/// Seeded two-class dataset for the reference experiment: photos of the
/// two-tone square concept against generated "square" images.
#[derive(Clone, Debug)]
pub struct ToyDataset {
    pub concept: ToyConcept,
    pub parent: String,
    pub train: Vec<Image>,
    pub held_out: Vec<Image>,
    /// Generated parent-class images from a seed disjoint from training negatives.
    pub held_out_parents: Vec<Image>,
    /// Rendered plain squares, for reference.
    pub rendered_parents: Vec<Image>,
    pub attributes: Vec<String>,
}

impl ToyDataset {
    pub const TRAIN_IMAGES: usize = 8;
    pub const HELD_OUT_IMAGES: usize = 32;

    pub fn generate(backbone: &crate::backbone::Backbone, seed: u64) -> Result<Self> {
        let concept = ToyConcept::two_tone_square();
        let side = backbone.toy().map(|t| t.codec.image_side).unwrap_or(16);
        let parent = concept.parent.word().to_string();
        Ok(Self {
            train: concept.images(Self::TRAIN_IMAGES, seed.wrapping_add(100), side),
            held_out: concept.images(Self::HELD_OUT_IMAGES, seed.wrapping_add(200), side),
            held_out_parents: crate::trainer::sample_negatives(
                &parent,
                Self::HELD_OUT_IMAGES,
                backbone,
                seed.wrapping_add(99_999),
            )?,
            rendered_parents: parent_images(concept.parent, Self::HELD_OUT_IMAGES, seed.wrapping_add(300), side),
            attributes: vocab::attribute_candidates(),
            parent,
            concept,
        })
    }
}

/// Training settings of the reference experiment (shorter and with a larger
/// step than the full-scale defaults).
pub fn recipe_config(seed: u64, lambda_sd: f64, lambda_ce: f64) -> crate::trainer::TrainingConfig {
    crate::trainer::TrainingConfig {
        lambda_sd,
        lambda_ce,
        learning_rate: 0.3,
        iterations: 1000,
        num_tokens: 10,
        seed,
        ..Default::default()
    }
}
