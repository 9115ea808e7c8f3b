use serde::{Deserialize, Serialize};

use super::{assemble_with, encode_text, normalize, ConditionVector, PromptOrder, SlotFill, TextEncoder};
use crate::embedding::TokenEmbedding;
use crate::error::{Error, Result};
use crate::Vector;

/// Unit-normalized component features of a composed query, cached so a
/// weight sweep does not re-encode anything.
#[derive(Clone, Debug)]
pub struct QueryComponents {
    pub template: String,
    pub parent: String,
    pub token_ref: String,
    /// Attributes in caller order.
    pub attributes: Vec<String>,
    /// `g([t, *, c])`, unit norm.
    pub token_feature: Vector,
    /// `g([t, a_i, c])`, unit norm, aligned with `attributes`.
    pub attribute_features: Vec<Vector>,
    /// `(1/|A|) Σ g([t, a_i, c])`; summed in attribute-name order so the
    /// result does not depend on the order of `A`. `None` when `A` is empty.
    pub attribute_mean: Option<Vector>,
}

impl QueryComponents {
    pub fn compute(
        template: &str,
        token: &TokenEmbedding,
        parent: &str,
        attributes: &[String],
        order: PromptOrder,
        encoder: &dyn TextEncoder,
    ) -> Result<Self> {
        let seq = assemble_with(template, SlotFill::Token(token), parent, order, encoder)?;
        let token_feature = normalize(&encode_text(encoder, &seq)?.values)?;
        let attribute_features = attributes
            .iter()
            .map(|a| {
                let seq = assemble_with(template, SlotFill::Text(a), parent, order, encoder)?;
                normalize(&encode_text(encoder, &seq)?.values)
            })
            .collect::<Result<Vec<_>>>()?;
        let attribute_mean = mean_in_name_order(attributes, &attribute_features);
        Ok(Self {
            template: template.to_string(),
            parent: parent.to_string(),
            token_ref: token.concept_id.clone(),
            attributes: attributes.to_vec(),
            token_feature,
            attribute_features,
            attribute_mean,
        })
    }

    /// `q = w·g([t,*,c]) + (1−w)·(1/|A|)·Σ g([t,a_i,c])`.
    pub fn compose(&self, weight: f64) -> Result<ComposedQuery> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::WeightOutOfRange(weight));
        }
        let values = match &self.attribute_mean {
            _ if weight == 1.0 => self.token_feature.clone(),
            Some(mean) => &self.token_feature * weight + mean * (1.0 - weight),
            None => return Err(Error::EmptyAttributes),
        };
        Ok(ComposedQuery {
            weight,
            attributes: self.attributes.clone(),
            template: self.template.clone(),
            parent: self.parent.clone(),
            token_ref: self.token_ref.clone(),
            feature: ConditionVector::raw(values),
        })
    }
}

fn mean_in_name_order(names: &[String], features: &[Vector]) -> Option<Vector> {
    if features.is_empty() {
        return None;
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| names[a].cmp(&names[b]));
    let mut sum = Vector::zeros(features[0].len());
    for i in order {
        sum += &features[i];
    }
    Some(sum / features.len() as f64)
}

/// A weighted combination of the token-bearing prompt and attribute prompts.
///
/// `feature` is the plain linear combination of unit components (not
/// re-normalized); scoring and generation normalize it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposedQuery {
    pub weight: f64,
    pub attributes: Vec<String>,
    pub template: String,
    pub parent: String,
    pub token_ref: String,
    pub feature: ConditionVector,
}

pub fn compose_query(
    template: &str,
    token: &TokenEmbedding,
    parent: &str,
    attributes: &[String],
    weight: f64,
    encoder: &dyn TextEncoder,
) -> Result<ComposedQuery> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::WeightOutOfRange(weight));
    }
    if weight < 1.0 && attributes.is_empty() {
        return Err(Error::EmptyAttributes);
    }
    QueryComponents::compute(template, token, parent, attributes, PromptOrder::default(), encoder)?.compose(weight)
}
