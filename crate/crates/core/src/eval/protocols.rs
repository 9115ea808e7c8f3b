//! Recognition splits and generated-image object/context accuracy.

use serde::{Deserialize, Serialize};

use super::metrics::{auc_roc, EvalReport, QueryDetail};
use crate::diffusion::ImageGenerator;
use crate::embedding::TokenEmbedding;
use crate::encoder::{
    assemble_with, encode_text, normalize, ImageEncoder, PromptOrder, SlotFill, TextEncoder, PARENT_SLOT, TOKEN_SLOT,
};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::image::Image;
use crate::rng::derive_seed;
use crate::Vector;

const CONTEXT_EVAL_STREAM: u64 = 0xC7E7;

/// Which prompt scores the parent-vs-other split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentSplitPrompt {
    /// `g([t, c])`.
    #[default]
    Parent,
    /// `g([t, *, c])`.
    Token,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecognitionReport {
    pub target_vs_parent: EvalReport,
    pub target_vs_other: EvalReport,
    pub parent_vs_other: EvalReport,
}

fn split_auc(name: &str, query: &Vector, positives: &[Vector], negatives: &[Vector]) -> Result<EvalReport> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::OneClassMissing { positives: positives.len(), negatives: negatives.len() });
    }
    let q = normalize(query)?;
    let scores = positives.iter().chain(negatives).map(|f| Ok(q.dot(&normalize(f)?))).collect::<Result<Vec<f64>>>()?;
    let labels: Vec<bool> = (0..scores.len()).map(|i| i < positives.len()).collect();
    Ok(EvalReport::new(name, auc_roc(&scores, &labels)?))
}

/// The three AUC splits from precomputed features.
pub fn recognition_from_features(
    token_feature: &Vector,
    parent_feature: &Vector,
    target: &[Vector],
    parent: &[Vector],
    other: &[Vector],
    parent_split: ParentSplitPrompt,
) -> Result<RecognitionReport> {
    let third = match parent_split {
        ParentSplitPrompt::Parent => parent_feature,
        ParentSplitPrompt::Token => token_feature,
    };
    Ok(RecognitionReport {
        target_vs_parent: split_auc("auc_target_vs_parent", token_feature, target, parent)?,
        target_vs_other: split_auc("auc_target_vs_other", token_feature, target, other)?,
        parent_vs_other: split_auc("auc_parent_vs_other", third, parent, other)?,
    })
}

/// Image sets for [`recognition_splits`].
#[derive(Clone, Copy, Debug)]
pub struct RecognitionSets<'a> {
    pub target: &'a [Image],
    pub parent: &'a [Image],
    /// Images of the negative classes.
    pub other: &'a [Image],
}

#[allow(clippy::too_many_arguments)]
pub fn recognition_splits(
    token: &TokenEmbedding,
    template: &str,
    order: PromptOrder,
    sets: RecognitionSets<'_>,
    parent_split: ParentSplitPrompt,
    text: &dyn TextEncoder,
    image: &dyn ImageEncoder,
    mode: Execution,
) -> Result<RecognitionReport> {
    let parent = &token.parent_concept;
    let token_feature =
        encode_text(text, &assemble_with(template, SlotFill::Token(token), parent, order, text)?)?.values;
    let parent_feature = encode_text(text, &assemble_with(template, SlotFill::Empty, parent, order, text)?)?.values;
    let feats = |imgs: &[Image]| exec::try_map_slice(mode, imgs, |img| image.encode_image(img));
    recognition_from_features(
        &token_feature,
        &parent_feature,
        &feats(sets.target)?,
        &feats(sets.parent)?,
        &feats(sets.other)?,
        parent_split,
    )
}

/// A context prompt (with a `{*}` slot) and the description its generated
/// images are checked against. Without a description, the prompt with both
/// slots removed is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextPrompt {
    pub prompt: String,
    #[serde(default)]
    pub description: Option<String>,
}

impl ContextPrompt {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self { prompt: prompt.into(), description: None }
    }

    pub fn description_text(&self) -> String {
        match &self.description {
            Some(d) => d.clone(),
            None => self
                .prompt
                .replace(TOKEN_SLOT, " ")
                .replace(PARENT_SLOT, " ")
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectContextReport {
    pub object_accuracy: EvalReport,
    pub context_accuracy: EvalReport,
}

/// Generates `images_per_context` images per context from the token-bearing
/// prompt and checks, per image, that the nearest context description is
/// the true one and that the nearest class (mean reference feature) is
/// `true_class`.
#[allow(clippy::too_many_arguments)]
pub fn object_context_accuracy(
    token: &TokenEmbedding,
    contexts: &[ContextPrompt],
    class_references: &[(String, Vec<Image>)],
    true_class: &str,
    images_per_context: usize,
    seed: u64,
    generator: &dyn ImageGenerator,
    text: &dyn TextEncoder,
    image: &dyn ImageEncoder,
    mode: Execution,
) -> Result<ObjectContextReport> {
    if contexts.len() < 2 {
        return Err(Error::InvalidArgument("at least two contexts are required".into()));
    }
    if class_references.len() < 2 {
        return Err(Error::InvalidArgument("at least two classes are required".into()));
    }
    if images_per_context == 0 {
        return Err(Error::InvalidArgument("images_per_context must be at least 1".into()));
    }
    let true_index = class_references
        .iter()
        .position(|(name, _)| name == true_class)
        .ok_or_else(|| Error::InvalidArgument(format!("class {true_class} has no references")))?;
    let class_means = class_references
        .iter()
        .map(|(name, imgs)| {
            if imgs.is_empty() {
                return Err(Error::InvalidArgument(format!("class {name} has no reference images")));
            }
            let mut sum = Vector::zeros(image.dim());
            for f in exec::try_map_slice(mode, imgs, |img| normalize(&image.encode_image(img)?))? {
                sum += f;
            }
            normalize(&sum)
        })
        .collect::<Result<Vec<_>>>()?;
    let context_features = contexts
        .iter()
        .map(|c| {
            let ids = text.tokenize(&c.description_text())?;
            normalize(&encode_text(text, &crate::encoder::TokenSequence::from_ids(&ids))?.values)
        })
        .collect::<Result<Vec<_>>>()?;

    let argmax = |f: &Vector, refs: &[Vector]| {
        let mut best = 0;
        for (i, r) in refs.iter().enumerate() {
            if f.dot(r) > f.dot(&refs[best]) {
                best = i;
            }
        }
        best
    };

    let mut object_hits = 0usize;
    let mut context_hits = 0usize;
    let mut object_details = Vec::new();
    let mut context_details = Vec::new();
    for (j, ctx) in contexts.iter().enumerate() {
        let seq =
            assemble_with(&ctx.prompt, SlotFill::Token(token), &token.parent_concept, PromptOrder::default(), text)?;
        let cond = encode_text(text, &seq)?;
        let base = derive_seed(seed, CONTEXT_EVAL_STREAM, j as u64);
        let features = exec::try_map_range(mode, images_per_context, |i| {
            let img = generator.generate(&cond, base.wrapping_add(i as u64))?;
            normalize(&image.encode_image(&img)?)
        })?;
        let (mut obj, mut con) = (0usize, 0usize);
        for f in &features {
            obj += usize::from(argmax(f, &class_means) == true_index);
            con += usize::from(argmax(f, &context_features) == j);
        }
        object_hits += obj;
        context_hits += con;
        let n = images_per_context as f64;
        object_details.push(QueryDetail { query: ctx.prompt.clone(), value: obj as f64 / n });
        context_details.push(QueryDetail { query: ctx.prompt.clone(), value: con as f64 / n });
    }
    let total = (contexts.len() * images_per_context) as f64;
    let mut object_accuracy = EvalReport::new("object_accuracy", object_hits as f64 / total);
    object_accuracy.details = object_details;
    let mut context_accuracy = EvalReport::new("context_accuracy", context_hits as f64 / total);
    context_accuracy.details = context_details;
    Ok(ObjectContextReport { object_accuracy, context_accuracy })
}
