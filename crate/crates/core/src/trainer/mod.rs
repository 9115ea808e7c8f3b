//! Joint token training: diffusion loss plus balanced classification loss,
//! optimized on raw rows that pass through the attribute projection.

mod artifact;
mod config;
mod loss;
mod optim;

pub use artifact::{ArtifactMetrics, TokenArtifact, ARTIFACT_VERSION};
pub use config::{OptimizerKind, TrainingConfig};
pub use loss::{balanced_cross_entropy, classification_from_features, combine, ClassificationTerm};
pub use optim::Optimizer;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbone::Backbone;
use crate::embedding::{attribute_embedding, project, AttributeSubspace, SubspaceSource, TokenEmbedding};
use crate::encoder::{
    assemble_with, encode_image, encode_plain_text, encode_text, encode_text_vjp, normalize, PromptTemplate, SlotFill,
    TextEncoder,
};
use crate::error::{Error, Result};
use crate::eval::balanced_accuracy;
use crate::exec;
use crate::format::{round_to_f32, sha256_hex};
use crate::image::Image;
use crate::rng::{derive_seed, standard_normal, stream, uniform_index};
use crate::Vector;

const INIT_STREAM: u64 = 0x1417;
const BATCH_STREAM: u64 = 0xBA7C;
const NOISE_STREAM: u64 = 0x4015;
const NEGATIVE_STREAM: u64 = 0x4E6A;

pub const DEFAULT_NEGATIVE_PROMPT: &str = "image of a {c}";

/// Positives `x`, generated parent negatives `x′`.
#[derive(Clone, Debug, Default)]
pub struct TrainingBatch {
    pub positives: Vec<Image>,
    pub negatives: Vec<Image>,
}

impl TrainingBatch {
    /// `x″ = [x, x′]`.
    pub fn merged(&self) -> Vec<&Image> {
        self.positives.iter().chain(&self.negatives).collect()
    }

    /// 1 for positives, 0 for negatives, aligned with [`Self::merged`].
    pub fn labels(&self) -> Vec<bool> {
        (0..self.positives.len() + self.negatives.len()).map(|i| i < self.positives.len()).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Not evaluated (reported as 0) when `lambda_sd` is 0.
    pub diffusion: f64,
    /// Not evaluated (reported as 0) when `lambda_ce` is 0.
    pub classification: f64,
}

/// `k` images from the generator conditioned on `g("image of a {c}")`.
pub fn sample_negatives(parent: &str, k: usize, backbone: &Backbone, seed: u64) -> Result<Vec<Image>> {
    sample_negatives_for_prompt(&DEFAULT_NEGATIVE_PROMPT.replace("{c}", parent), k, backbone, seed)
}

/// Base seed of the negatives a run with training seed `seed` generates
/// when none are supplied.
pub fn negative_seed(seed: u64) -> u64 {
    derive_seed(seed, NEGATIVE_STREAM, 0)
}

pub fn sample_negatives_for_prompt(prompt: &str, k: usize, backbone: &Backbone, seed: u64) -> Result<Vec<Image>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let cond = encode_plain_text(backbone.text.as_ref(), prompt)?;
    backbone.diffusion.generate_batch(&cond, k, seed)
}

/// On-disk cache of generated negatives keyed by prompt, backbone and seed.
/// Image `i` depends only on the key and `i`, so larger requests reuse the
/// images already stored.
#[derive(Clone, Debug)]
pub struct NegativeCache {
    root: PathBuf,
}

impl NegativeCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn key(prompt: &str, backbone: &Backbone, seed: u64) -> String {
        sha256_hex(format!("{prompt}\u{0}{}\u{0}{seed}", backbone.fingerprint()).as_bytes())
    }

    pub fn dir_for(&self, prompt: &str, backbone: &Backbone, seed: u64) -> PathBuf {
        self.root.join(Self::key(prompt, backbone, seed))
    }

    pub fn get_or_generate(&self, prompt: &str, k: usize, backbone: &Backbone, seed: u64) -> Result<Vec<Image>> {
        let dir = self.dir_for(prompt, backbone, seed);
        std::fs::create_dir_all(&dir)?;
        let path = |i: usize| dir.join(format!("{i:05}.png"));
        let missing: Vec<usize> = (0..k).filter(|&i| !path(i).exists()).collect();
        if !missing.is_empty() {
            let cond = encode_plain_text(backbone.text.as_ref(), prompt)?;
            let generated = exec::try_map_slice(backbone.diffusion.execution(), &missing, |&i| {
                backbone.diffusion.sample(&cond, backbone.diffusion.sample_steps(), seed.wrapping_add(i as u64))
            })?;
            for (&i, img) in missing.iter().zip(&generated) {
                write_atomic(&path(i), &img.to_png()?)?;
            }
        }
        (0..k).map(|i| Image::load(path(i))).collect()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// Builds the projection subspace requested by `config.subspace_rank`.
pub fn subspace_for_config(
    attributes: &[String],
    encoder: &dyn TextEncoder,
    config: &TrainingConfig,
    source: SubspaceSource,
) -> Result<Option<AttributeSubspace>> {
    match config.subspace_rank {
        None => Ok(None),
        Some(0) => AttributeSubspace::from_attributes(attributes, encoder, None, source).map(Some),
        Some(r) => AttributeSubspace::from_attributes(attributes, encoder, Some(r), source).map(Some),
    }
}

/// Raw rows before the first step: the (projected) parent embedding,
/// replicated, plus seeded Gaussian jitter.
pub fn initial_rows(
    parent: &str,
    encoder: &dyn TextEncoder,
    subspace: Option<&AttributeSubspace>,
    config: &TrainingConfig,
) -> Result<Vec<Vector>> {
    let mut base = attribute_embedding(parent, encoder)?;
    if let Some(s) = subspace {
        base = project(&base, s)?;
    }
    let mut rng = stream(derive_seed(config.seed, INIT_STREAM, 0));
    Ok((0..config.num_tokens).map(|_| &base + standard_normal(&mut rng, base.len()) * config.init_jitter).collect())
}

/// What one iteration looks at.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSample {
    pub template: usize,
    pub positives: Vec<usize>,
    pub noise_seed: u64,
}

/// The training objective with every frozen quantity precomputed.
pub struct Objective<'a> {
    backbone: &'a Backbone,
    config: &'a TrainingConfig,
    subspace: Option<&'a AttributeSubspace>,
    parent: String,
    paraphrases: Vec<String>,
    parent_features: Vec<Vector>,
    positive_latents: Vec<Vector>,
    positive_features: Vec<Vector>,
    negative_features: Vec<Vector>,
}

impl<'a> Objective<'a> {
    pub fn new(
        backbone: &'a Backbone,
        config: &'a TrainingConfig,
        template: &PromptTemplate,
        parent: &str,
        positives: &[Image],
        negatives: &[Image],
        subspace: Option<&'a AttributeSubspace>,
    ) -> Result<Self> {
        config.validate()?;
        template.validate()?;
        if positives.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if let Some(s) = subspace {
            if s.dim() != backbone.text.embed_dim() {
                return Err(Error::DimensionMismatch { expected: backbone.text.embed_dim(), got: s.dim() });
            }
        }
        if config.lambda_ce > 0.0 && negatives.is_empty() {
            return Err(Error::OneClassMissing { positives: positives.len(), negatives: 0 });
        }
        let text = backbone.text.as_ref();
        let mode = backbone.diffusion.execution();
        let parent_features = template
            .paraphrase_set
            .iter()
            .map(|p| {
                let seq = assemble_with(p, SlotFill::Empty, parent, config.prompt_order, text)?;
                Ok(encode_text(text, &seq)?.values)
            })
            .collect::<Result<Vec<_>>>()?;
        let unit_features = |images: &[Image]| {
            exec::try_map_slice(mode, images, |img| normalize(&encode_image(backbone.image.as_ref(), img)?.values))
        };
        Ok(Self {
            backbone,
            config,
            subspace,
            parent: parent.to_string(),
            paraphrases: template.paraphrase_set.clone(),
            parent_features,
            positive_latents: exec::map_slice(mode, positives, |img| backbone.diffusion.codec().encode(img)),
            positive_features: if config.lambda_ce > 0.0 { unit_features(positives)? } else { Vec::new() },
            negative_features: if config.lambda_ce > 0.0 { unit_features(negatives)? } else { Vec::new() },
        })
    }

    pub fn step_sample(&self, iteration: usize) -> StepSample {
        let mut rng = stream(derive_seed(self.config.seed, BATCH_STREAM, iteration as u64));
        let template = uniform_index(&mut rng, self.paraphrases.len());
        let n = self.positive_latents.len();
        let positives = if n <= self.config.batch_size {
            (0..n).collect()
        } else {
            let mut idx = rand::seq::index::sample(&mut rng, n, self.config.batch_size).into_vec();
            idx.sort_unstable();
            idx
        };
        StepSample { template, positives, noise_seed: derive_seed(self.config.seed, NOISE_STREAM, iteration as u64) }
    }

    /// `project(e)` for each row, or the rows themselves without a subspace.
    pub fn forward_rows(&self, raw: &[Vector]) -> Result<Vec<Vector>> {
        match self.subspace {
            Some(s) => raw.iter().map(|r| project(r, s)).collect(),
            None => Ok(raw.to_vec()),
        }
    }

    /// Loss terms and the gradient w.r.t. the raw rows.
    pub fn evaluate(&self, raw: &[Vector], sample: &StepSample) -> Result<(LossBreakdown, Vec<Vector>)> {
        let text = self.backbone.text.as_ref();
        let rows = self.forward_rows(raw)?;
        let seq = assemble_with(
            &self.paraphrases[sample.template],
            SlotFill::Rows(&rows),
            &self.parent,
            self.config.prompt_order,
            text,
        )?;
        let tau = encode_text(text, &seq)?.values;
        let mut grad_tau = Vector::zeros(tau.len());
        let mut out = LossBreakdown::default();
        if self.config.lambda_sd > 0.0 {
            let latents: Vec<Vector> = sample.positives.iter().map(|&i| self.positive_latents[i].clone()).collect();
            let d = self.backbone.diffusion.diffusion_loss_latents(&latents, &tau, sample.noise_seed)?;
            out.diffusion = d.loss;
            grad_tau.axpy(self.config.lambda_sd, &d.grad_condition, 1.0);
        }
        if self.config.lambda_ce > 0.0 {
            let pos: Vec<Vector> = sample.positives.iter().map(|&i| self.positive_features[i].clone()).collect();
            let c = classification_from_features(
                &tau,
                &self.parent_features[sample.template],
                &pos,
                &self.negative_features,
                self.config.temperature,
            )?;
            out.classification = c.loss;
            grad_tau.axpy(self.config.lambda_ce, &c.grad_token_feature, 1.0);
        }
        out.total = combine(self.config.lambda_sd, self.config.lambda_ce, out.diffusion, out.classification);
        let grad_rows = encode_text_vjp(text, &seq, &grad_tau)?;
        let grad_raw = match self.subspace {
            Some(s) => grad_rows.iter().map(|g| s.apply_linear(g)).collect(),
            None => grad_rows,
        };
        Ok((out, grad_raw))
    }
}

/// Inputs of one training run besides the config.
#[derive(Clone, Copy, Debug)]
pub struct TrainingRequest<'a> {
    pub concept_id: &'a str,
    pub parent: &'a str,
    pub images: &'a [Image],
    pub template: &'a PromptTemplate,
    /// Projection target; `None` trains unconstrained rows.
    pub subspace: Option<&'a AttributeSubspace>,
    /// Pre-generated negatives; generated from `config.negative_prompt` when absent.
    pub negatives: Option<&'a [Image]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingProgress {
    pub iteration: usize,
    pub iterations: usize,
    pub losses: LossBreakdown,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub token: TokenEmbedding,
    pub final_losses: LossBreakdown,
    /// Total loss per iteration.
    pub loss_history: Vec<f64>,
}

impl TrainingOutcome {
    pub fn artifact(&self, subspace: Option<&AttributeSubspace>) -> TokenArtifact {
        TokenArtifact::new(&self.token, subspace, ArtifactMetrics { final_losses: Some(self.final_losses) })
    }
}

pub fn train_token(
    backbone: &Backbone,
    request: TrainingRequest<'_>,
    config: &TrainingConfig,
) -> Result<TrainingOutcome> {
    train_token_with_progress(backbone, request, config, &mut |_| {})
}

pub fn train_token_with_progress(
    backbone: &Backbone,
    request: TrainingRequest<'_>,
    config: &TrainingConfig,
    progress: &mut dyn FnMut(&TrainingProgress),
) -> Result<TrainingOutcome> {
    config.validate()?;
    if request.images.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let generated;
    let negatives = match request.negatives {
        Some(n) => n,
        None if config.lambda_ce > 0.0 => {
            generated = sample_negatives_for_prompt(
                &config.negative_prompt_for(request.parent),
                config.negatives_k,
                backbone,
                negative_seed(config.seed),
            )?;
            &generated
        }
        None => &[],
    };
    let objective = Objective::new(
        backbone,
        config,
        request.template,
        request.parent,
        request.images,
        negatives,
        request.subspace,
    )?;
    let mut raw = initial_rows(request.parent, backbone.text.as_ref(), request.subspace, config)?;
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, raw.len(), raw[0].len());
    let mut history = Vec::with_capacity(config.iterations);
    let mut last = LossBreakdown::default();
    for iteration in 0..config.iterations {
        let sample = objective.step_sample(iteration);
        let (losses, grads) = objective.evaluate(&raw, &sample)?;
        if !losses.total.is_finite() || grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFiniteLoss {
                iteration,
                total: losses.total,
                diffusion: losses.diffusion,
                classification: losses.classification,
            });
        }
        optimizer.apply(&mut raw, &grads);
        history.push(losses.total);
        last = losses;
        progress(&TrainingProgress { iteration: iteration + 1, iterations: config.iterations, losses });
    }
    let rows = objective.forward_rows(&raw)?.iter().map(round_to_f32).collect();
    let token = TokenEmbedding::new(
        request.concept_id,
        request.parent,
        rows,
        request.subspace.map(AttributeSubspace::id),
        request.subspace.is_some(),
        config.fingerprint(),
    )?;
    Ok(TrainingOutcome { token, final_losses: last, loss_history: history })
}

/// Balanced accuracy of the rule "concept iff `cos(g(prompt with token), f(x))`
/// exceeds `cos(g(prompt without token), f(x))`".
pub fn token_vs_parent_accuracy(
    backbone: &Backbone,
    token: &TokenEmbedding,
    template: &str,
    concept_images: &[Image],
    parent_images: &[Image],
) -> Result<f64> {
    let text = backbone.text.as_ref();
    let parent = &token.parent_concept;
    let order = Default::default();
    let tau_token =
        normalize(&encode_text(text, &assemble_with(template, SlotFill::Token(token), parent, order, text)?)?.values)?;
    let tau_parent =
        normalize(&encode_text(text, &assemble_with(template, SlotFill::Empty, parent, order, text)?)?.values)?;
    let images: Vec<&Image> = concept_images.iter().chain(parent_images).collect();
    let predictions = exec::try_map_slice(backbone.diffusion.execution(), &images, |img| {
        let f = normalize(&encode_image(backbone.image.as_ref(), img)?.values)?;
        Ok::<_, Error>(tau_token.dot(&f) > tau_parent.dot(&f))
    })?;
    let labels: Vec<bool> = (0..images.len()).map(|i| i < concept_images.len()).collect();
    balanced_accuracy(&predictions, &labels)
}
