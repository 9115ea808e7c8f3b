use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryDetail {
    pub query: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    #[serde(default)]
    pub details: Vec<QueryDetail>,
    /// Standard deviation over repeats, when repeats were run.
    #[serde(default)]
    pub std: Option<f64>,
}

impl EvalReport {
    pub fn new(metric: impl Into<String>, value: f64) -> Self {
        Self { metric: metric.into(), value, details: Vec::new(), std: None }
    }
}

/// Mean reciprocal rank of 1-based ground-truth ranks.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::EmptyInput);
    }
    if ranks.contains(&0) {
        return Err(Error::InvalidArgument("ranks are 1-based".into()));
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
///
/// Computed from rank sums with doubled mid-ranks so that the numerator is
/// the exact integer `2·wins + ties`.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), got: labels.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::OneClassMissing { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end; twice their mean is start + 1 + end.
        let doubled = (start + 1 + end) as u128;
        let group_positives = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        doubled_rank_sum += doubled * group_positives;
        start = end;
    }
    let p = positives as u128;
    let numerator = doubled_rank_sum - p * (p + 1);
    Ok(numerator as f64 / (2 * positives * negatives) as f64)
}

/// Mean of the per-class recalls of a binary prediction.
pub fn balanced_accuracy(predictions: &[bool], labels: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: predictions.len() });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::OneClassMissing { positives, negatives });
    }
    let tp = predictions.iter().zip(labels).filter(|(&p, &l)| p && l).count();
    let tn = predictions.iter().zip(labels).filter(|(&p, &l)| !p && !l).count();
    Ok(0.5 * (tp as f64 / positives as f64 + tn as f64 / negatives as f64))
}

/// Expected accuracy of assigning one of `n` labels uniformly at random.
pub fn random_assignment_accuracy(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(1.0 / n as f64)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}
