use serde::{Deserialize, Serialize};

use crate::encoder::PromptOrder;
use crate::error::{Error, Result};
use crate::format::sha256_hex;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Momentum {
        momentum: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

/// Settings of one training run. Missing JSON fields take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lambda_sd: f64,
    pub lambda_ce: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub num_tokens: usize,
    /// `None` trains without the attribute projection; `Some(0)` uses the
    /// largest rank the subspace supports.
    pub subspace_rank: Option<usize>,
    pub negatives_k: usize,
    pub seed: u64,
    pub prompt_order: PromptOrder,
    /// Inverse softmax temperature applied to cosine scores.
    pub temperature: f64,
    pub optimizer: OptimizerKind,
    /// Standard deviation of the initial per-row jitter.
    pub init_jitter: f64,
    /// Prompt used to generate parent-class negatives.
    pub negative_prompt: String,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda_sd: 1.0,
            lambda_ce: 1e-5,
            learning_rate: 5e-4,
            iterations: 20_000,
            batch_size: 4,
            num_tokens: 10,
            subspace_rank: Some(0),
            negatives_k: 32,
            seed: 0,
            prompt_order: PromptOrder::TokenThenParent,
            temperature: 100.0,
            optimizer: OptimizerKind::Sgd,
            init_jitter: 1e-3,
            negative_prompt: "image of a {c}".into(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.lambda_sd >= 0.0 && self.lambda_ce >= 0.0)
            || !self.lambda_sd.is_finite()
            || !self.lambda_ce.is_finite()
        {
            return bad("loss weights must be finite and non-negative");
        }
        if self.lambda_sd == 0.0 && self.lambda_ce == 0.0 {
            return bad("lambda_sd and lambda_ce cannot both be zero");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.num_tokens == 0 {
            return bad("num_tokens must be at least 1");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.init_jitter >= 0.0 && self.init_jitter.is_finite()) {
            return bad("init_jitter must be finite and non-negative");
        }
        if self.lambda_ce > 0.0 && self.negatives_k == 0 {
            return bad("classification loss needs negatives_k >= 1");
        }
        if !self.negative_prompt.contains(crate::encoder::PARENT_SLOT) {
            return bad("negative_prompt needs a {c} slot");
        }
        match self.optimizer {
            OptimizerKind::Sgd => {}
            OptimizerKind::Momentum { momentum } if (0.0..1.0).contains(&momentum) => {}
            OptimizerKind::Adam { beta1, beta2, eps }
                if (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0 => {}
            _ => return bad("optimizer coefficients out of range"),
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn negative_prompt_for(&self, parent: &str) -> String {
        self.negative_prompt.replace(crate::encoder::PARENT_SLOT, parent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainingConfig::default();
        c.validate().unwrap();
        assert_eq!(c.num_tokens, 10);
        assert_eq!(c.lambda_ce, 1e-5);
        assert_eq!(c.learning_rate, 5e-4);
        assert_eq!(c.iterations, 20_000);
    }

    #[test]
    fn rejects_both_weights_zero_and_no_iterations() {
        let c = TrainingConfig { lambda_sd: 0.0, lambda_ce: 0.0, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let c = TrainingConfig { iterations: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = TrainingConfig::default();
        let b = TrainingConfig { seed: 1, ..Default::default() };
        assert_eq!(a.fingerprint(), TrainingConfig::default().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn partial_json_takes_defaults() {
        let c: TrainingConfig = serde_json::from_str(
            r#"{"iterations": 5, "optimizer": {"kind": "adam", "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}}"#,
        )
        .unwrap();
        assert_eq!(c.iterations, 5);
        assert_eq!(c.batch_size, 4);
        c.validate().unwrap();
        assert!(serde_json::from_str::<TrainingConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
