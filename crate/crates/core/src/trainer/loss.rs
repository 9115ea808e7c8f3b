//! Balanced two-class cross-entropy between the token prompt and the parent prompt.

use crate::encoder::{normalize, normalize_vjp};
use crate::error::{Error, Result};
use crate::Vector;

/// Per-image logits `[token, parent]` with `true` labels for concept images.
///
/// Each class's cross-entropy is averaged separately and the two means are
/// averaged. Also returns `dL/dlogit_token` per image.
pub fn balanced_cross_entropy(logits: &[[f64; 2]], labels: &[bool]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: logits.len(), got: labels.len() });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::OneClassMissing { positives, negatives });
    }
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (&[lt, lp], &label) in logits.iter().zip(labels) {
        let m = lt.max(lp);
        let lse = m + ((lt - m).exp() + (lp - m).exp()).ln();
        let p_token = (lt - lse).exp();
        let weight = 0.5 / if label { positives } else { negatives } as f64;
        if label {
            loss += weight * (lse - lt);
            grads.push(weight * (p_token - 1.0));
        } else {
            loss += weight * (lse - lp);
            grads.push(weight * p_token);
        }
    }
    Ok((loss, grads))
}

#[derive(Clone, Debug)]
pub struct ClassificationTerm {
    pub loss: f64,
    /// Gradient w.r.t. the raw (unnormalized) token-prompt feature.
    pub grad_token_feature: Vector,
}

/// Classification loss from features: `token_feature` and `parent_feature`
/// are raw text features, image features are unit norm.
pub fn classification_from_features(
    token_feature: &Vector,
    parent_feature: &Vector,
    positives: &[Vector],
    negatives: &[Vector],
    temperature: f64,
) -> Result<ClassificationTerm> {
    let token_unit = normalize(token_feature)?;
    let parent_unit = normalize(parent_feature)?;
    let images: Vec<&Vector> = positives.iter().chain(negatives).collect();
    let labels: Vec<bool> = (0..images.len()).map(|i| i < positives.len()).collect();
    let logits: Vec<[f64; 2]> =
        images.iter().map(|f| [temperature * token_unit.dot(f), temperature * parent_unit.dot(f)]).collect();
    let (loss, dlogits) = balanced_cross_entropy(&logits, &labels)?;
    let mut grad_unit = Vector::zeros(token_unit.len());
    for (f, d) in images.iter().zip(dlogits) {
        grad_unit.axpy(d * temperature, f, 1.0);
    }
    Ok(ClassificationTerm { loss, grad_token_feature: normalize_vjp(token_feature, &grad_unit) })
}

/// `λ_SD·l_SD + λ_CE·l_CE`.
pub fn combine(lambda_sd: f64, lambda_ce: f64, diffusion: f64, classification: f64) -> f64 {
    lambda_sd * diffusion + lambda_ce * classification
}
