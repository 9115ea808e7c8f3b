//! Studio configuration: one TOML or JSON file plus environment overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use custom_tokens::embedding::DEFAULT_TOP_N;
use custom_tokens::toy::{recipe_config, vocab};
use custom_tokens::trainer::TrainingConfig;
use custom_tokens::{BackboneSpec, Execution};

pub const ROOT_ENV: &str = "STUDIO_ROOT";
pub const BACKBONE_ENV: &str = "STUDIO_BACKBONE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudioConfig {
    /// Root of the file store.
    pub root: PathBuf,
    pub backbone: BackboneSpec,
    pub execution: Execution,
    /// Base training settings; request fields override them.
    pub training: TrainingConfig,
    /// Candidates for automatic attribute selection at ingest.
    pub attribute_candidates: Vec<String>,
    pub top_n_attributes: usize,
    /// Caption used when a request does not carry one.
    pub default_caption: String,
}

impl Default for StudioConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("studio-data"),
            backbone: BackboneSpec::toy(0),
            execution: Execution::default(),
            training: recipe_config(0, 1.0, 1e-2),
            attribute_candidates: vocab::attribute_candidates(),
            top_n_attributes: DEFAULT_TOP_N,
            default_caption: "a photo of a {*} {c}".into(),
        }
    }
}

impl StudioConfig {
    /// Reads a `.toml` or `.json` file.
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Ok(toml::from_str(&text)?),
            Some("json") => Ok(serde_json::from_str(&text)?),
            _ => bail!("config file must end in .toml or .json: {}", path.display()),
        }
    }

    /// File (or defaults), then `STUDIO_ROOT` / `STUDIO_BACKBONE`.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut config = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Ok(root) = std::env::var(ROOT_ENV) {
            config.root = root.into();
        }
        if let Ok(spec) = std::env::var(BACKBONE_ENV) {
            config.backbone = parse_backbone(&spec)?;
        }
        Ok(config)
    }
}

/// `toy`, `toy:<seed>`, or a path to a backbone spec JSON file.
pub fn parse_backbone(value: &str) -> anyhow::Result<BackboneSpec> {
    if value == "toy" {
        return Ok(BackboneSpec::toy(0));
    }
    if let Some(seed) = value.strip_prefix("toy:") {
        return Ok(BackboneSpec::toy(seed.parse().context("toy seed must be an integer")?));
    }
    let text = std::fs::read_to_string(value).with_context(|| format!("reading backbone spec {value}"))?;
    Ok(BackboneSpec::from_json(&text)?)
}
