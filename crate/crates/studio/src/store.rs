//! File store under one root:
//!
//! ```text
//! concepts/<id>.json   images/<sha>.png   tokens/<sha>.json
//! indexes/<sha>.bin    indexes/<sha>.images.json
//! jobs/<id>.json       previews/<sha>.png  cache/negatives/
//! ```
//!
//! Images, tokens, indexes and previews are content-addressed; concept and
//! job ids are sequential so that replaying the same requests against an
//! empty root reproduces the same ids.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use custom_tokens::eval::RetrievalIndex;
use custom_tokens::format::sha256_hex;
use custom_tokens::trainer::TokenArtifact;
use custom_tokens::Image;

use crate::error::{ApiError, ApiResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum AttributeSource {
    Selected,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Concept {
    pub id: String,
    pub parent: String,
    /// Content hashes of the concept images, in upload order.
    pub images: Vec<String>,
    pub attributes: Vec<String>,
    pub attribute_source: AttributeSource,
    /// Content hash of the trained token artifact.
    pub token: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Train,
    Gair,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running) | (JobState::Running, JobState::Done | JobState::Failed)
        )
    }

    pub fn is_active(self) -> bool {
        matches!(self, JobState::Queued | JobState::Running)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    /// In `[0, 1]`.
    pub progress: f64,
    pub concept_id: Option<String>,
    /// Store-relative path of the result, set once the job is done.
    pub result_ref: Option<String>,
    /// Inline result for small outputs (GAIR).
    pub result: Option<serde_json::Value>,
    pub error: Option<String>,
}

impl Job {
    pub fn new(id: String, kind: JobKind, concept_id: Option<String>) -> Self {
        Self {
            id,
            kind,
            state: JobState::Queued,
            progress: 0.0,
            concept_id,
            result_ref: None,
            result: None,
            error: None,
        }
    }

    pub fn transition(&mut self, next: JobState) -> ApiResult<()> {
        if !self.state.can_become(next) {
            return Err(ApiError::Internal(format!(
                "job {}: illegal transition {:?} -> {next:?}",
                self.id, self.state
            )));
        }
        self.state = next;
        Ok(())
    }
}

/// Maps index item ids to image hashes so hits can be shown.
pub type IndexImages = BTreeMap<String, String>;

pub struct Store {
    root: PathBuf,
    counter: Mutex<()>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}

/// Only lowercase hex and `-` may reach a path.
fn check_id(id: &str) -> ApiResult<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_hexdigit() || c == '-' || c.is_ascii_lowercase()) {
        return Err(ApiError::NotFound(format!("malformed id {id:?}")));
    }
    Ok(())
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        for dir in ["concepts", "images", "tokens", "indexes", "jobs", "previews", "cache"] {
            std::fs::create_dir_all(root.join(dir))?;
        }
        Ok(Self { root, counter: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn negative_cache_dir(&self) -> PathBuf {
        self.root.join("cache").join("negatives")
    }

    /// Next free `<prefix>-NNNNNN` id in `dir`, reserved by creating the file.
    fn next_id(&self, dir: &str, prefix: &str) -> ApiResult<String> {
        let _guard = self.counter.lock().expect("id lock");
        let count = std::fs::read_dir(self.root.join(dir))?.count();
        let mut n = count + 1;
        loop {
            let id = format!("{prefix}-{n:06}");
            let path = self.root.join(dir).join(format!("{id}.json"));
            if !path.exists() {
                std::fs::write(&path, b"{}")?;
                return Ok(id);
            }
            n += 1;
        }
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, path: PathBuf, what: &str, id: &str) -> ApiResult<T> {
        match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| ApiError::Internal(format!("{what} {id}: {e}"))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(ApiError::NotFound(format!("unknown {what} {id}")))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn put_image(&self, image: &Image) -> ApiResult<String> {
        let png = image.to_png()?;
        let hash = sha256_hex(&png);
        let path = self.image_path(&hash);
        if !path.exists() {
            write_atomic(&path, &png)?;
        }
        Ok(hash)
    }

    pub fn image_path(&self, hash: &str) -> PathBuf {
        self.root.join("images").join(format!("{hash}.png"))
    }

    pub fn image_png(&self, hash: &str) -> ApiResult<Vec<u8>> {
        check_id(hash)?;
        std::fs::read(self.image_path(hash)).map_err(|_| ApiError::NotFound(format!("unknown image {hash}")))
    }

    pub fn load_image(&self, hash: &str) -> ApiResult<Image> {
        Ok(Image::from_png(&self.image_png(hash)?)?)
    }

    pub fn new_concept_id(&self) -> ApiResult<String> {
        self.next_id("concepts", "concept")
    }

    pub fn save_concept(&self, concept: &Concept) -> ApiResult<()> {
        let path = self.root.join("concepts").join(format!("{}.json", concept.id));
        Ok(write_atomic(&path, &serde_json::to_vec_pretty(concept)?)?)
    }

    pub fn concept(&self, id: &str) -> ApiResult<Concept> {
        check_id(id)?;
        let concept: Concept = self.read_json(self.root.join("concepts").join(format!("{id}.json")), "concept", id)?;
        Ok(concept)
    }

    pub fn concepts(&self) -> ApiResult<Vec<Concept>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(self.root.join("concepts"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Ok(c) = serde_json::from_slice::<Concept>(&std::fs::read(&path)?) {
                    out.push(c);
                }
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    /// Stores a token artifact under its content hash.
    pub fn put_token(&self, artifact: &TokenArtifact) -> ApiResult<String> {
        let text = artifact.to_json()?;
        let hash = sha256_hex(text.as_bytes());
        write_atomic(&self.token_path(&hash), text.as_bytes())?;
        Ok(hash)
    }

    pub fn token_path(&self, hash: &str) -> PathBuf {
        self.root.join("tokens").join(format!("{hash}.json"))
    }

    pub fn token(&self, hash: &str) -> ApiResult<TokenArtifact> {
        check_id(hash)?;
        let path = self.token_path(hash);
        if !path.exists() {
            return Err(ApiError::NotFound(format!("unknown token {hash}")));
        }
        Ok(TokenArtifact::load(path)?)
    }

    pub fn put_index(&self, index: &RetrievalIndex, images: &IndexImages) -> ApiResult<String> {
        let bytes = index.to_bytes()?;
        let hash = sha256_hex(&bytes);
        write_atomic(&self.index_path(&hash), &bytes)?;
        write_atomic(
            &self.root.join("indexes").join(format!("{hash}.images.json")),
            &serde_json::to_vec_pretty(images)?,
        )?;
        Ok(hash)
    }

    pub fn index_path(&self, hash: &str) -> PathBuf {
        self.root.join("indexes").join(format!("{hash}.bin"))
    }

    pub fn index(&self, hash: &str) -> ApiResult<RetrievalIndex> {
        check_id(hash)?;
        let path = self.index_path(hash);
        if !path.exists() {
            return Err(ApiError::NotFound(format!("unknown index {hash}")));
        }
        Ok(RetrievalIndex::load(path)?)
    }

    pub fn index_images(&self, hash: &str) -> ApiResult<IndexImages> {
        check_id(hash)?;
        let path = self.root.join("indexes").join(format!("{hash}.images.json"));
        if !path.exists() {
            return Ok(IndexImages::new());
        }
        self.read_json(path, "index", hash)
    }

    pub fn put_preview(&self, image: &Image) -> ApiResult<String> {
        let png = image.to_png()?;
        let hash = sha256_hex(&png);
        let path = self.preview_path(&hash);
        if !path.exists() {
            write_atomic(&path, &png)?;
        }
        Ok(hash)
    }

    pub fn preview_path(&self, hash: &str) -> PathBuf {
        self.root.join("previews").join(format!("{hash}.png"))
    }

    pub fn preview_png(&self, hash: &str) -> ApiResult<Vec<u8>> {
        check_id(hash)?;
        std::fs::read(self.preview_path(hash)).map_err(|_| ApiError::NotFound(format!("unknown preview {hash}")))
    }

    pub fn new_job_id(&self) -> ApiResult<String> {
        self.next_id("jobs", "job")
    }

    pub fn save_job(&self, job: &Job) -> ApiResult<()> {
        let path = self.root.join("jobs").join(format!("{}.json", job.id));
        Ok(write_atomic(&path, &serde_json::to_vec_pretty(job)?)?)
    }

    pub fn job(&self, id: &str) -> ApiResult<Job> {
        check_id(id)?;
        self.read_json(self.root.join("jobs").join(format!("{id}.json")), "job", id)
    }
}
