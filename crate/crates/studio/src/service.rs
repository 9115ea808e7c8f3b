//! Operations shared by the HTTP handlers and the CLI.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex};

use base64::Engine;
use log::{info, warn};

use custom_tokens::embedding::{attribute_embedding, select_attributes, SubspaceSource, TokenEmbedding};
use custom_tokens::encoder::{encode_plain_text, ConditionVector, PromptOrder, PromptTemplate, QueryComponents};
use custom_tokens::eval::{build_index, read_manifest, IndexItem, RetrievalIndex};
use custom_tokens::format::vector_fingerprint;
use custom_tokens::gair::{default_grid, run_gair, GairModels, GairRequest, DEFAULT_PREVIEWS_PER_WEIGHT};
use custom_tokens::trainer::{
    negative_seed, subspace_for_config, train_token_with_progress, NegativeCache, TokenArtifact, TrainingConfig,
    TrainingRequest,
};
use custom_tokens::{Backbone, Error as CoreError, Image, Vector};

use crate::config::StudioConfig;
use crate::error::{ApiError, ApiResult};
use crate::store::{AttributeSource, Concept, IndexImages, Job, JobKind, JobState, Store};
use crate::types::*;

pub struct Studio {
    pub config: StudioConfig,
    pub store: Store,
    pub backbone: Arc<Backbone>,
    jobs: Mutex<HashMap<String, Job>>,
    /// Concepts with a queued or running training job.
    training: Mutex<HashSet<String>>,
    /// One lock per concept: jobs touching the same concept run one at a time.
    concept_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

pub fn decode_png_base64(text: &str) -> ApiResult<Image> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(text.trim())
        .map_err(|e| ApiError::BadRequest(format!("image is not valid base64: {e}")))?;
    Ok(Image::from_png(&bytes)?)
}

pub fn encode_png_base64(image: &Image) -> ApiResult<String> {
    Ok(base64::engine::general_purpose::STANDARD.encode(image.to_png()?))
}

impl Studio {
    pub fn open(config: StudioConfig) -> anyhow::Result<Self> {
        let backbone = Backbone::load(&config.backbone)?.with_execution(config.execution);
        let store = Store::open(&config.root)?;
        info!("studio root {} backbone {}", config.root.display(), backbone.fingerprint());
        Ok(Self {
            config,
            store,
            backbone: Arc::new(backbone),
            jobs: Mutex::new(HashMap::new()),
            training: Mutex::new(HashSet::new()),
            concept_locks: Mutex::new(HashMap::new()),
        })
    }

    fn concept_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.concept_locks.lock().expect("lock table").entry(id.to_string()).or_default().clone()
    }

    pub fn default_caption(&self) -> &str {
        &self.config.default_caption
    }

    // Concepts

    pub fn ingest(&self, request: &IngestRequest) -> ApiResult<Concept> {
        let images = request.images.iter().map(|b| decode_png_base64(b)).collect::<ApiResult<Vec<_>>>()?;
        self.ingest_images(&request.parent, &images, request.attributes.clone())
    }

    pub fn ingest_images(&self, parent: &str, images: &[Image], attributes: Option<Vec<String>>) -> ApiResult<Concept> {
        let parent = parent.trim();
        if parent.is_empty() {
            return Err(ApiError::BadRequest("parent must be non-empty".into()));
        }
        if images.is_empty() {
            return Err(CoreError::NoImages.into());
        }
        let text = self.backbone.text.as_ref();
        attribute_embedding(parent, text)?;
        let (attributes, attribute_source) = match attributes {
            Some(list) => {
                if list.is_empty() {
                    return Err(CoreError::EmptyAttributes.into());
                }
                for a in &list {
                    attribute_embedding(a, text)?;
                }
                (list, AttributeSource::Manual)
            }
            None => {
                let selected = select_attributes(
                    &self.config.attribute_candidates,
                    images,
                    self.config.top_n_attributes,
                    text,
                    self.backbone.image.as_ref(),
                )?;
                (selected, AttributeSource::Selected)
            }
        };
        let hashes = images.iter().map(|img| self.store.put_image(img)).collect::<ApiResult<Vec<_>>>()?;
        let concept = Concept {
            id: self.store.new_concept_id()?,
            parent: parent.to_string(),
            images: hashes,
            attributes,
            attribute_source,
            token: None,
        };
        self.store.save_concept(&concept)?;
        Ok(concept)
    }

    pub fn concept_images(&self, concept: &Concept) -> ApiResult<Vec<Image>> {
        concept.images.iter().map(|h| self.store.load_image(h)).collect()
    }

    pub fn concept_token(&self, concept: &Concept) -> ApiResult<(String, TokenArtifact)> {
        let hash = concept
            .token
            .clone()
            .ok_or_else(|| ApiError::BadRequest(format!("concept {} has no trained token yet", concept.id)))?;
        let artifact = self.store.token(&hash)?;
        Ok((hash, artifact))
    }

    // Training

    pub fn training_config(&self, request: &TrainRequest) -> ApiResult<TrainingConfig> {
        let mut c = self.config.training.clone();
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = request.$field.clone() {
                    c.$target = v;
                })*
            };
        }
        set!(
            iterations => iterations,
            learning_rate => learning_rate,
            lambda_sd => lambda_sd,
            lambda_ce => lambda_ce,
            num_tokens => num_tokens,
            batch_size => batch_size,
            negatives_k => negatives_k,
            temperature => temperature,
            seed => seed
        );
        c.subspace_rank = match (request.projected, request.subspace_rank) {
            (Some(false), _) => None,
            (_, Some(r)) => Some(r),
            (_, None) if request.projected == Some(true) => Some(0),
            _ => c.subspace_rank,
        };
        c.validate().map_err(|e| ApiError::BadRequest(e.to_string()))?;
        Ok(c)
    }

    fn template_for(&self, request: &TrainRequest) -> ApiResult<PromptTemplate> {
        let template = match (&request.caption, &request.paraphrases) {
            (None, None) => PromptTemplate::default(),
            (Some(c), None) => PromptTemplate::new(c.clone())?,
            (caption, Some(list)) => {
                let first = list.first().ok_or_else(|| ApiError::BadRequest("paraphrases must be non-empty".into()))?;
                PromptTemplate::with_paraphrases(caption.clone().unwrap_or_else(|| first.clone()), list.clone())?
            }
        };
        Ok(template)
    }

    /// Trains synchronously and records the token on the concept.
    pub fn train(
        &self,
        concept_id: &str,
        request: &TrainRequest,
        progress: &mut dyn FnMut(f64),
    ) -> ApiResult<(String, TokenArtifact)> {
        let config = self.training_config(request)?;
        let template = self.template_for(request)?;
        let lock = self.concept_lock(concept_id);
        let _guard = lock.lock().expect("concept lock");
        let mut concept = self.store.concept(concept_id)?;
        let images = self.concept_images(&concept)?;
        let bb = self.backbone.as_ref();
        let source = match concept.attribute_source {
            AttributeSource::Selected => SubspaceSource::CorrelationSelected,
            AttributeSource::Manual => SubspaceSource::Manual,
        };
        let subspace = subspace_for_config(&concept.attributes, bb.text.as_ref(), &config, source)?;
        let negatives = if config.lambda_ce > 0.0 {
            NegativeCache::new(self.store.negative_cache_dir()).get_or_generate(
                &config.negative_prompt_for(&concept.parent),
                config.negatives_k,
                bb,
                negative_seed(config.seed),
            )?
        } else {
            Vec::new()
        };
        let training_request = TrainingRequest {
            concept_id: &concept.id,
            parent: &concept.parent,
            images: &images,
            template: &template,
            subspace: subspace.as_ref(),
            negatives: Some(&negatives),
        };
        let total = config.iterations.max(1);
        let step = (total / 100).max(1);
        let outcome = train_token_with_progress(bb, training_request, &config, &mut |p| {
            if p.iteration % step == 0 || p.iteration == total {
                progress(p.iteration as f64 / total as f64);
            }
        })?;
        let artifact = outcome.artifact(subspace.as_ref());
        let hash = self.store.put_token(&artifact)?;
        concept.token = Some(hash.clone());
        self.store.save_concept(&concept)?;
        info!("concept {concept_id}: token {hash} (loss {:.4})", outcome.final_losses.total);
        Ok((hash, artifact))
    }

    // Jobs

    fn update_job(&self, id: &str, f: impl FnOnce(&mut Job) -> ApiResult<()>, persist: bool) -> ApiResult<Job> {
        let mut jobs = self.jobs.lock().expect("job table");
        let job = jobs.get_mut(id).ok_or_else(|| ApiError::NotFound(format!("unknown job {id}")))?;
        f(job)?;
        if persist {
            self.store.save_job(job)?;
        }
        Ok(job.clone())
    }

    fn register_job(&self, kind: JobKind, concept_id: Option<String>) -> ApiResult<Job> {
        let job = Job::new(self.store.new_job_id()?, kind, concept_id);
        self.store.save_job(&job)?;
        self.jobs.lock().expect("job table").insert(job.id.clone(), job.clone());
        Ok(job)
    }

    /// Runs `work` on its own thread, recording state transitions.
    fn spawn_job<F>(self: &Arc<Self>, job: &Job, work: F)
    where
        F: FnOnce(&Studio, &mut dyn FnMut(f64)) -> ApiResult<(Option<String>, Option<serde_json::Value>)>
            + Send
            + 'static,
    {
        let studio = Arc::clone(self);
        let id = job.id.clone();
        std::thread::spawn(move || {
            let _ = studio.update_job(&id, |j| j.transition(JobState::Running), true);
            let mut progress = |p: f64| {
                let _ = studio.update_job(
                    &id,
                    |j| {
                        j.progress = p.clamp(0.0, 1.0);
                        Ok(())
                    },
                    false,
                );
            };
            let outcome = work(&studio, &mut progress);
            let saved = studio.update_job(
                &id,
                |j| {
                    match outcome {
                        Ok((result_ref, result)) => {
                            j.progress = 1.0;
                            j.result_ref = result_ref.or_else(|| Some(format!("jobs/{}.json", j.id)));
                            j.result = result;
                            j.transition(JobState::Done)?;
                        }
                        Err(e) => {
                            warn!("job {} failed: {e}", j.id);
                            j.error = Some(e.to_string());
                            j.transition(JobState::Failed)?;
                        }
                    }
                    Ok(())
                },
                true,
            );
            if let Ok(job) = saved {
                if job.kind == JobKind::Train {
                    if let Some(c) = &job.concept_id {
                        studio.training.lock().expect("training set").remove(c);
                    }
                }
            }
        });
    }

    pub fn start_train_job(self: &Arc<Self>, concept_id: &str, request: TrainRequest) -> ApiResult<Job> {
        let concept = self.store.concept(concept_id)?;
        if concept.images.is_empty() {
            return Err(CoreError::NoImages.into());
        }
        self.training_config(&request)?;
        self.template_for(&request)?;
        {
            let mut busy = self.training.lock().expect("training set");
            if !busy.insert(concept_id.to_string()) {
                return Err(ApiError::ConceptBusy(concept_id.to_string()));
            }
        }
        let job = match self.register_job(JobKind::Train, Some(concept_id.to_string())) {
            Ok(job) => job,
            Err(e) => {
                self.training.lock().expect("training set").remove(concept_id);
                return Err(e);
            }
        };
        let concept_id = concept_id.to_string();
        self.spawn_job(&job, move |studio, progress| {
            let (hash, _) = studio.train(&concept_id, &request, progress)?;
            Ok((Some(format!("tokens/{hash}.json")), None))
        });
        Ok(job)
    }

    pub fn start_gair_job(self: &Arc<Self>, request: GairRequestBody) -> ApiResult<Job> {
        self.store.concept(&request.concept_id)?;
        let job = self.register_job(JobKind::Gair, Some(request.concept_id.clone()))?;
        self.spawn_job(&job, move |studio, _| {
            let response = studio.gair(&request)?;
            Ok((None, Some(serde_json::to_value(response)?)))
        });
        Ok(job)
    }

    pub fn job(&self, id: &str) -> ApiResult<Job> {
        if let Some(job) = self.jobs.lock().expect("job table").get(id) {
            return Ok(job.clone());
        }
        self.store.job(id)
    }

    // Queries

    fn components(&self, query: &QuerySpec) -> ApiResult<(Concept, String, TokenEmbedding, QueryComponents)> {
        query.validate()?;
        let concept = self.store.concept(&query.concept_id)?;
        let (hash, artifact) = self.concept_token(&concept)?;
        let token = artifact.token()?;
        let caption = query.caption.clone().unwrap_or_else(|| self.config.default_caption.clone());
        let components = QueryComponents::compute(
            &caption,
            &token,
            &concept.parent,
            &query.attributes,
            PromptOrder::default(),
            self.backbone.text.as_ref(),
        )?;
        Ok((concept, hash, token, components))
    }

    pub fn compose(&self, query: &QuerySpec) -> ApiResult<ComposeResponse> {
        let (concept, hash, _, components) = self.components(query)?;
        let composed = components.compose(query.weight)?;
        let token_only = components.compose(1.0)?;
        Ok(ComposeResponse {
            concept_id: concept.id,
            token_ref: hash,
            caption: components.template.clone(),
            parent: concept.parent,
            weight: query.weight,
            attributes: query.attributes.clone(),
            components: ComposeComponents {
                token_fingerprint: vector_fingerprint(&components.token_feature),
                attributes: components
                    .attributes
                    .iter()
                    .zip(&components.attribute_features)
                    .map(|(a, f)| AttributeComponent { attribute: a.clone(), fingerprint: vector_fingerprint(f) })
                    .collect(),
            },
            feature_fingerprint: vector_fingerprint(&composed.feature.values),
            token_only_fingerprint: vector_fingerprint(&token_only.feature.values),
            feature: composed.feature.values.iter().copied().collect(),
        })
    }

    pub fn preview_images(&self, request: &PreviewRequest) -> ApiResult<(ComposeResponse, Vec<(u64, Image)>)> {
        if request.count == 0 || request.count > MAX_PREVIEWS {
            return Err(ApiError::BadRequest(format!("count must be in 1..={MAX_PREVIEWS}")));
        }
        let composed = self.compose(&request.query)?;
        let cond = ConditionVector::raw(Vector::from_vec(composed.feature.clone()));
        let images = self.backbone.diffusion.generate_batch(&cond, request.count, request.seed)?;
        let seeds = (0..request.count as u64).map(|j| request.seed.wrapping_add(j));
        Ok((composed, seeds.zip(images).collect()))
    }

    pub fn preview(&self, request: &PreviewRequest) -> ApiResult<PreviewResponse> {
        let (composed, images) = self.preview_images(request)?;
        let images = images
            .iter()
            .map(|(seed, img)| {
                let id = self.store.put_preview(img)?;
                Ok(ImageRef { url: preview_url(&id), id, seed: Some(*seed) })
            })
            .collect::<ApiResult<Vec<_>>>()?;
        Ok(PreviewResponse { feature_fingerprint: composed.feature_fingerprint, weight: composed.weight, images })
    }

    pub fn query_feature(&self, request: &RetrieveRequest) -> ApiResult<Vector> {
        request.validate()?;
        if let Some(q) = &request.query {
            return Ok(Vector::from_vec(self.compose(q)?.feature));
        }
        if let Some(text) = &request.text {
            return Ok(encode_plain_text(self.backbone.text.as_ref(), text)?.values);
        }
        let feature = request.feature.clone().expect("validated");
        if feature.iter().any(|x| !x.is_finite()) {
            return Err(ApiError::BadRequest("feature has non-finite entries".into()));
        }
        Ok(Vector::from_vec(feature))
    }

    pub fn retrieve(&self, request: &RetrieveRequest) -> ApiResult<RetrieveResponse> {
        let query = self.query_feature(request)?;
        let index = self.store.index(&request.index_id)?;
        let images = self.store.index_images(&request.index_id)?;
        let hits = index.search(&query)?;
        let total = hits.len();
        let limit = request.limit.unwrap_or(total);
        let results = hits
            .into_iter()
            .enumerate()
            .skip(request.offset)
            .take(limit)
            .map(|(i, h)| Hit {
                rank: i + 1,
                label: index.get(&h.id).and_then(|e| e.label.clone()),
                image_url: images.get(&h.id).map(|hash| image_url(hash)),
                id: h.id,
                score: h.score,
            })
            .collect();
        Ok(RetrieveResponse { index_id: request.index_id.clone(), total, offset: request.offset, results })
    }

    // GAIR

    pub fn gair(&self, request: &GairRequestBody) -> ApiResult<GairResponse> {
        let lock = self.concept_lock(&request.concept_id);
        let _guard = lock.lock().expect("concept lock");
        let concept = self.store.concept(&request.concept_id)?;
        let (hash, artifact) = self.concept_token(&concept)?;
        let references = self.concept_images(&concept)?;
        self.gair_with_token(&concept.id, &concept.parent, &hash, &artifact.token()?, &references, request)
    }

    /// The sweep itself, for any token and reference images.
    pub fn gair_with_token(
        &self,
        concept_id: &str,
        parent: &str,
        token_ref: &str,
        token: &TokenEmbedding,
        references: &[Image],
        request: &GairRequestBody,
    ) -> ApiResult<GairResponse> {
        let core_request = GairRequest {
            token_ref: token_ref.to_string(),
            caption: request.caption.clone().unwrap_or_else(|| self.config.default_caption.clone()),
            parent: parent.to_string(),
            attributes: request.attributes.clone(),
            weight_grid: request.weight_grid.clone().unwrap_or_else(default_grid),
            previews_per_weight: request.previews_per_weight.unwrap_or(DEFAULT_PREVIEWS_PER_WEIGHT),
            seed: request.seed,
        };
        core_request.validate()?;
        if core_request.weight_grid.len() * core_request.previews_per_weight > 16 * MAX_PREVIEWS {
            return Err(ApiError::BadRequest("grid size times previews per weight is too large".into()));
        }
        let result = run_gair(
            &core_request,
            token,
            references,
            GairModels::from_backbone(&self.backbone),
            self.config.execution,
        )?;
        let store_ref = |img: &Image| {
            let id = self.store.put_preview(img)?;
            Ok::<_, ApiError>(ImageRef { url: preview_url(&id), id, seed: None })
        };
        let previews = result
            .preview_images
            .iter()
            .map(|row| row.iter().map(store_ref).collect::<ApiResult<Vec<_>>>())
            .collect::<ApiResult<Vec<_>>>()?;
        let context_images = result.context_images.iter().map(store_ref).collect::<ApiResult<Vec<_>>>()?;
        Ok(GairResponse {
            concept_id: concept_id.to_string(),
            curve_csv: result.score_curve_csv(),
            optimal_weight: result.optimal_weight,
            weight_grid: result.weight_grid,
            per_weight_scores: result.per_weight_scores,
            previews,
            context_images,
        })
    }

    // Indexes

    pub fn build_index(&self, items: Vec<(String, Image, Option<String>)>) -> ApiResult<IndexInfo> {
        if items.is_empty() {
            return Err(CoreError::EmptyIndex.into());
        }
        let mut images = IndexImages::new();
        for (id, img, _) in &items {
            images.insert(id.clone(), self.store.put_image(img)?);
        }
        let items: Vec<IndexItem> =
            items.into_iter().map(|(id, image, label)| IndexItem { id, image, label }).collect();
        let index = build_index(&items, self.backbone.image.as_ref(), self.config.execution)?;
        let id = self.store.put_index(&index, &images)?;
        Ok(index_info(&id, &index, &images))
    }

    pub fn build_index_from_request(&self, request: &IndexRequest) -> ApiResult<IndexInfo> {
        let items = request
            .items
            .iter()
            .map(|item| Ok((item.id.clone(), decode_png_base64(&item.image)?, item.label.clone())))
            .collect::<ApiResult<Vec<_>>>()?;
        self.build_index(items)
    }

    /// Index over the images of a manifest; ids are the manifest paths.
    pub fn build_index_from_manifest(&self, manifest: &Path) -> ApiResult<IndexInfo> {
        let rows = read_manifest(manifest)?;
        let base = manifest.parent().unwrap_or(Path::new(""));
        let items = rows
            .into_iter()
            .map(|row| {
                let id = manifest_id(&row.image_path, base);
                Ok((id, Image::load(&row.image_path)?, Some(row.class_id)))
            })
            .collect::<ApiResult<Vec<_>>>()?;
        self.build_index(items)
    }

    pub fn index_info(&self, id: &str) -> ApiResult<IndexInfo> {
        let index = self.store.index(id)?;
        let images = self.store.index_images(id)?;
        Ok(index_info(id, &index, &images))
    }
}

/// Item id of a manifest image: its path relative to the manifest directory.
pub fn manifest_id(path: &Path, base: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/")
}

fn index_info(id: &str, index: &RetrievalIndex, images: &IndexImages) -> IndexInfo {
    IndexInfo {
        id: id.to_string(),
        dim: index.dim(),
        count: index.len(),
        encoder_checksum: index.encoder_checksum().to_string(),
        entries: index
            .entries()
            .iter()
            .map(|e| IndexEntryInfo {
                id: e.id.clone(),
                label: e.label.clone(),
                image_url: images.get(&e.id).map(|h| image_url(h)),
            })
            .collect(),
    }
}
