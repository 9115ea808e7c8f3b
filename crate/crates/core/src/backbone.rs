//! Backbone loading: a JSON model spec resolves to a text encoder, an
//! image encoder and a diffusion model sharing one joint space.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionModel;
use crate::encoder::{ImageEncoder, TextEncoder};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::format::sha256_hex;
use crate::toy::{ToyBackbone, ToyParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Toy,
    External,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedPolicy {
    /// Image `i` of a batch uses `seed + i`.
    #[default]
    Sequential,
}

/// `{kind, seed, latent_shape, T_train, T_sample, seed_policy, params}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneSpec {
    pub kind: BackboneKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_latent_shape")]
    pub latent_shape: [usize; 3],
    #[serde(rename = "T_train", default = "default_t_train")]
    pub t_train: usize,
    #[serde(rename = "T_sample", default = "default_t_sample")]
    pub t_sample: usize,
    #[serde(default)]
    pub seed_policy: SeedPolicy,
    #[serde(default)]
    pub params: serde_json::Value,
}

fn default_latent_shape() -> [usize; 3] {
    [3, 8, 8]
}

fn default_t_train() -> usize {
    1000
}

fn default_t_sample() -> usize {
    50
}

impl Default for BackboneSpec {
    fn default() -> Self {
        Self::toy(0)
    }
}

impl BackboneSpec {
    pub fn toy(seed: u64) -> Self {
        Self {
            kind: BackboneKind::Toy,
            seed,
            latent_shape: default_latent_shape(),
            t_train: default_t_train(),
            t_sample: default_t_sample(),
            seed_policy: SeedPolicy::Sequential,
            params: serde_json::Value::Null,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn toy_params(&self) -> Result<ToyParams> {
        if self.params.is_null() {
            return Ok(ToyParams::default());
        }
        serde_json::from_value(self.params.clone()).map_err(|e| Error::InvalidConfig(format!("toy params: {e}")))
    }
}

/// Text encoder `g`, image encoder `f` and generator `d`, all frozen.
#[derive(Clone)]
pub struct Backbone {
    pub text: Arc<dyn TextEncoder>,
    pub image: Arc<dyn ImageEncoder>,
    pub diffusion: DiffusionModel,
    spec: BackboneSpec,
    toy: Option<ToyBackbone>,
}

impl std::fmt::Debug for Backbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backbone").field("spec", &self.spec).field("diffusion", &self.diffusion).finish()
    }
}

impl Backbone {
    pub fn load(spec: &BackboneSpec) -> Result<Self> {
        match spec.kind {
            BackboneKind::Toy => {
                let [channels, h, w] = spec.latent_shape;
                if channels != 3 || h != w || h == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "toy backbone needs latent_shape [3, s, s], got {:?}",
                        spec.latent_shape
                    )));
                }
                let toy = ToyBackbone::build(&spec.toy_params()?, spec.seed, h as u32, spec.t_train)?;
                let diffusion =
                    DiffusionModel::new(toy.codec.clone(), toy.denoiser.clone(), toy.schedule.clone(), spec.t_sample)?;
                Ok(Self {
                    text: toy.text.clone(),
                    image: toy.image.clone(),
                    diffusion,
                    spec: spec.clone(),
                    toy: Some(toy),
                })
            }
            BackboneKind::External => Err(Error::Unsupported(
                "external backbones are attached with Backbone::from_parts by the embedding application".into(),
            )),
        }
    }

    /// Wraps externally provided adapters (e.g. a full-scale model).
    pub fn from_parts(
        spec: BackboneSpec,
        text: Arc<dyn TextEncoder>,
        image: Arc<dyn ImageEncoder>,
        diffusion: DiffusionModel,
    ) -> Result<Self> {
        if text.dim() != image.dim() || text.dim() != diffusion.cond_dim() {
            return Err(Error::DimensionMismatch { expected: text.dim(), got: image.dim().max(diffusion.cond_dim()) });
        }
        Ok(Self { text, image, diffusion, spec, toy: None })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.diffusion = self.diffusion.with_execution(exec);
        self
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn toy(&self) -> Option<&ToyBackbone> {
        self.toy.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.text.dim()
    }

    /// Checksums of every frozen parameter set.
    pub fn parameter_checksums(&self) -> [String; 3] {
        [self.text.parameter_checksum(), self.image.parameter_checksum(), self.diffusion.parameter_checksum()]
    }

    /// Stable identifier of the loaded weights.
    pub fn fingerprint(&self) -> String {
        sha256_hex(self.parameter_checksums().join("|").as_bytes())
    }
}
