//! Command-line front end. Every subcommand is a thin wrapper over
//! [`Studio`]; results go to the given writer so tests can run commands
//! in-process.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use custom_tokens::embedding::{affinity, attribute_embedding, norm_report, project, TokenEmbedding};
use custom_tokens::eval::{
    auc_roc, mrr, object_context_accuracy, read_manifest, recognition_splits, ContextPrompt, EvalReport,
    ParentSplitPrompt, RecognitionSets,
};
use custom_tokens::toy::{parent_images, Shape, ToyConcept};
use custom_tokens::trainer::{initial_rows, sample_negatives, subspace_for_config};
use custom_tokens::Image;

use crate::config::{parse_backbone, StudioConfig};
use crate::plot;
use crate::service::{manifest_id, Studio};
use crate::store::Concept;
use crate::types::*;

#[derive(Debug, Parser)]
#[command(name = "studio", version, about = "Custom-token studio: train, compose, preview, retrieve")]
pub struct Cli {
    /// Store root (overrides the config file).
    #[arg(long, global = true, env = "STUDIO_ROOT")]
    pub root: Option<PathBuf>,
    /// TOML or JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `toy`, `toy:<seed>` or a backbone spec JSON file.
    #[arg(long, global = true, env = "STUDIO_BACKBONE")]
    pub backbone: Option<String>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Write the built-in toy dataset as PNG files plus a manifest.
    ToyData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Register a concept from image files or directories; prints its id.
    Ingest {
        #[arg(long)]
        parent: String,
        #[arg(long, required = true, num_args = 1..)]
        images: Vec<PathBuf>,
        /// Comma-separated manual attributes.
        #[arg(long, value_delimiter = ',')]
        attributes: Option<Vec<String>>,
    },
    /// Train a token; prints the artifact path. Without `--concept` the
    /// built-in toy concept is ingested first.
    Train(TrainArgs),
    /// Print the composed query as JSON.
    Compose(QueryArgs),
    /// Generate previews of a composed query; prints the PNG paths.
    Generate {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an index over a manifest or image files; prints its id.
    Index {
        #[arg(long, conflicts_with = "images")]
        manifest: Option<PathBuf>,
        #[arg(long, num_args = 1..)]
        images: Vec<PathBuf>,
    },
    /// Rank an index against a composed or plain-text query.
    Retrieve {
        #[arg(long)]
        index: String,
        #[command(flatten)]
        query: OptionalQueryArgs,
        #[arg(long, conflicts_with = "concept")]
        text: Option<String>,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Sweep composition weights; prints the best one.
    Gair(GairArgs),
    /// Evaluation metrics.
    Eval(EvalArgs),
    /// Write affinity, norm and weight-curve charts with their CSVs.
    Report {
        #[arg(long)]
        concept: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Attributes for the weight curve; default: the concept's first three.
        #[arg(long, value_delimiter = ',')]
        attributes: Option<Vec<String>>,
        #[arg(long, default_value_t = 2)]
        previews: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub concept: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lambda_sd: Option<f64>,
    #[arg(long)]
    pub lambda_ce: Option<f64>,
    #[arg(long)]
    pub num_tokens: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train without the attribute projection.
    #[arg(long)]
    pub no_project: bool,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub caption: Option<String>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub concept: String,
    #[arg(long)]
    pub caption: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub attributes: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    pub weight: f64,
}

#[derive(Debug, Args)]
pub struct OptionalQueryArgs {
    #[arg(long)]
    pub concept: Option<String>,
    #[arg(long)]
    pub caption: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub attributes: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    pub weight: f64,
}

#[derive(Debug, Args)]
pub struct GairArgs {
    /// Without a concept the sweep uses the toy concept with its
    /// initial (untrained) token.
    #[arg(long)]
    pub concept: Option<String>,
    #[arg(long)]
    pub caption: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub attributes: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub previews: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the score curve here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Print the full result as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Mrr,
    Auc,
    Recognition,
    ObjectContext,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// MRR from explicit 1-based ranks.
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// MRR over an index: JSON list of `{"query": QuerySpec, "target": id}`.
    #[arg(long, requires = "index")]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<String>,
    /// AUC inputs.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub scores: Option<Vec<f64>>,
    /// AUC labels, 1 or 0.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<u8>>,
    #[arg(long)]
    pub concept: Option<String>,
    #[arg(long)]
    pub caption: Option<String>,
    /// Recognition image sets (directories or manifests of one class each).
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub parent: Option<PathBuf>,
    #[arg(long)]
    pub other: Option<PathBuf>,
    /// Score the parent-vs-other split with the token prompt.
    #[arg(long)]
    pub token_parent_split: bool,
    /// Object/context setup: JSON with `contexts`, `classes`, `true_class`,
    /// `images_per_context`, `seed`.
    #[arg(long)]
    pub setup: Option<PathBuf>,
    /// Write `metric,value` rows here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct MrrQuery {
    query: QuerySpec,
    target: String,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassImages {
    name: String,
    images: PathBuf,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectContextSetup {
    contexts: Vec<ContextPrompt>,
    classes: Vec<ClassImages>,
    true_class: String,
    #[serde(default = "default_images_per_context")]
    images_per_context: usize,
    #[serde(default)]
    seed: u64,
}

fn default_images_per_context() -> usize {
    4
}

/// Scalars with at most five decimals and no trailing zeros.
pub fn format_scalar(v: f64) -> String {
    let s = format!("{v:.5}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

impl Cli {
    pub fn studio_config(&self) -> anyhow::Result<StudioConfig> {
        let mut config = StudioConfig::load(self.config.as_deref())?;
        if let Some(root) = &self.root {
            config.root = root.clone();
        }
        if let Some(spec) = &self.backbone {
            config.backbone = parse_backbone(spec)?;
        }
        if self.sequential {
            config.execution = custom_tokens::Execution::Sequential;
        }
        Ok(config)
    }
}

pub fn main_with_args(args: impl IntoIterator<Item = String>, out: &mut dyn Write) -> anyhow::Result<()> {
    let cli = Cli::try_parse_from(args)?;
    run(cli, out)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    if let Command::ToyData { out: dir, seed } = &cli.command {
        let config = cli.studio_config()?;
        let backbone = custom_tokens::Backbone::load(&config.backbone)?.with_execution(config.execution);
        return write_toy_data(&backbone, dir, *seed, out);
    }
    let studio = Arc::new(Studio::open(cli.studio_config()?)?);
    match cli.command {
        Command::Serve { addr } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::api::serve(studio, &addr))?;
        }
        Command::ToyData { .. } => unreachable!("handled above"),
        Command::Ingest { parent, images, attributes } => {
            let images = load_images(&images)?;
            let concept = studio.ingest_images(&parent, &images, attributes)?;
            writeln!(out, "{}", concept.id)?;
        }
        Command::Train(args) => {
            let concept = match &args.concept {
                Some(id) => studio.store.concept(id)?,
                None => demo_concept(&studio)?,
            };
            let request = train_request(&args);
            let mut last = 0;
            let (hash, _) = studio.train(&concept.id, &request, &mut |p| {
                let pct = (p * 100.0) as u32;
                if pct >= last + 10 || pct == 100 {
                    log::info!("training {}: {pct}%", concept.id);
                    last = pct;
                }
            })?;
            writeln!(out, "{}", studio.store.token_path(&hash).display())?;
        }
        Command::Compose(q) => {
            let response = studio.compose(&q.spec())?;
            writeln!(out, "{}", serde_json::to_string_pretty(&response)?)?;
        }
        Command::Generate { query, count, seed, out: dir } => {
            let (_, images) = studio.preview_images(&PreviewRequest { query: query.spec(), count, seed })?;
            std::fs::create_dir_all(&dir)?;
            for (seed, img) in images {
                let path = dir.join(format!("preview-{seed}.png"));
                img.save_png(&path)?;
                writeln!(out, "{}", path.display())?;
            }
        }
        Command::Index { manifest, images } => {
            let info = match manifest {
                Some(m) => studio.build_index_from_manifest(&m)?,
                None => {
                    let files = image_files(&images)?;
                    let items = files
                        .iter()
                        .map(|p| {
                            let base = p.parent().unwrap_or(Path::new(""));
                            Ok((manifest_id(p, base), Image::load(p)?, None))
                        })
                        .collect::<anyhow::Result<Vec<_>>>()?;
                    studio.build_index(items)?
                }
            };
            writeln!(out, "{}", info.id)?;
        }
        Command::Retrieve { index, query, text, top } => {
            let query_spec = match (&query.concept, &text) {
                (Some(_), None) => Some(query.spec()?),
                (None, Some(_)) => None,
                _ => bail!("give exactly one of --concept or --text"),
            };
            let response = studio.retrieve(&RetrieveRequest {
                index_id: index,
                query: query_spec,
                text,
                feature: None,
                offset: 0,
                limit: Some(top),
            })?;
            for hit in response.results {
                writeln!(out, "{}\t{}\t{:.6}", hit.rank, hit.id, hit.score)?;
            }
        }
        Command::Gair(args) => gair(&studio, args, out)?,
        Command::Eval(args) => eval(&studio, args, out)?,
        Command::Report { concept, out: dir, attributes, previews, seed } => {
            report(&studio, concept, &dir, attributes, previews, seed, out)?
        }
    }
    Ok(())
}

impl QueryArgs {
    fn spec(&self) -> QuerySpec {
        QuerySpec {
            concept_id: self.concept.clone(),
            caption: self.caption.clone(),
            attributes: self.attributes.clone(),
            weight: self.weight,
        }
    }
}

impl OptionalQueryArgs {
    fn spec(&self) -> anyhow::Result<QuerySpec> {
        Ok(QuerySpec {
            concept_id: self.concept.clone().context("--concept is required")?,
            caption: self.caption.clone(),
            attributes: self.attributes.clone(),
            weight: self.weight,
        })
    }
}

fn train_request(args: &TrainArgs) -> TrainRequest {
    TrainRequest {
        iterations: args.iterations,
        learning_rate: args.learning_rate,
        lambda_sd: args.lambda_sd,
        lambda_ce: args.lambda_ce,
        num_tokens: args.num_tokens,
        negatives_k: args.negatives,
        seed: args.seed,
        projected: args.no_project.then_some(false),
        subspace_rank: args.rank,
        caption: args.caption.clone(),
        ..Default::default()
    }
}

fn is_png(p: &Path) -> bool {
    p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Files as given, directories expanded to their PNGs in name order.
pub fn image_files(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            inner.retain(|f| is_png(f));
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn load_images(paths: &[PathBuf]) -> anyhow::Result<Vec<Image>> {
    image_files(paths)?.iter().map(|p| Image::load(p).with_context(|| format!("loading {}", p.display()))).collect()
}

/// A directory of PNGs or a manifest CSV.
fn load_set(path: &Path) -> anyhow::Result<Vec<Image>> {
    if path.is_file() && path.extension().and_then(|e| e.to_str()) == Some("csv") {
        return read_manifest(path)?.iter().map(|r| Ok(Image::load(&r.image_path)?)).collect();
    }
    load_images(&[path.to_path_buf()])
}

fn toy_side(studio: &Studio) -> u32 {
    studio.backbone.toy().map(|t| t.codec.image_side).unwrap_or(16)
}

/// The built-in toy concept, ingested once per store.
fn demo_concept(studio: &Studio) -> anyhow::Result<Concept> {
    let toy = ToyConcept::two_tone_square();
    let images = toy.images(8, 100, toy_side(studio));
    let hashes = images.iter().map(|img| img.fingerprint()).collect::<Vec<_>>();
    let parent = toy.parent.word();
    for concept in studio.store.concepts()? {
        let stored: Vec<String> = concept
            .images
            .iter()
            .map(|h| studio.store.load_image(h).map(|i| i.fingerprint()))
            .collect::<Result<_, _>>()?;
        if concept.parent == parent && stored == hashes {
            return Ok(concept);
        }
    }
    Ok(studio.ingest_images(parent, &images, None)?)
}

fn demo_token(studio: &Studio, concept: &Concept) -> anyhow::Result<TokenEmbedding> {
    let config = &studio.config.training;
    let text = studio.backbone.text.as_ref();
    let subspace = subspace_for_config(&concept.attributes, text, config, Default::default())?;
    let rows = initial_rows(&concept.parent, text, subspace.as_ref(), config)?
        .iter()
        .map(|r| match &subspace {
            Some(s) => project(r, s),
            None => Ok(r.clone()),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TokenEmbedding::new(&concept.id, &concept.parent, rows, None, subspace.is_some(), "initial")?)
}

fn default_attributes(concept: &Concept) -> Vec<String> {
    concept.attributes.iter().take(3).cloned().collect()
}

fn gair_body(concept: &Concept, args: &GairArgs) -> GairRequestBody {
    GairRequestBody {
        concept_id: concept.id.clone(),
        caption: args.caption.clone(),
        attributes: args.attributes.clone().unwrap_or_else(|| default_attributes(concept)),
        weight_grid: args.grid.clone(),
        previews_per_weight: args.previews,
        seed: args.seed,
        run_async: false,
    }
}

fn gair(studio: &Studio, args: GairArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let response = match &args.concept {
        Some(id) => {
            let concept = studio.store.concept(id)?;
            studio.gair(&gair_body(&concept, &args))?
        }
        None => {
            let concept = demo_concept(studio)?;
            let token = demo_token(studio, &concept)?;
            let references = studio.concept_images(&concept)?;
            let body = gair_body(&concept, &args);
            studio.gair_with_token(&concept.id, &concept.parent, "initial", &token, &references, &body)?
        }
    };
    if let Some(path) = &args.csv {
        std::fs::write(path, &response.curve_csv)?;
    }
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&response)?)?;
    } else {
        writeln!(out, "{}", format_scalar(response.optimal_weight))?;
    }
    Ok(())
}

fn eval(studio: &Studio, args: EvalArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let reports: Vec<EvalReport> = match args.metric {
        Metric::Mrr => {
            let ranks = match (&args.ranks, &args.queries) {
                (Some(r), None) => r.clone(),
                (None, Some(path)) => {
                    let index_id = args.index.as_deref().context("--index is required with --queries")?;
                    let queries: Vec<MrrQuery> = serde_json::from_str(&std::fs::read_to_string(path)?)
                        .with_context(|| format!("parsing {}", path.display()))?;
                    let index = studio.store.index(index_id)?;
                    queries
                        .iter()
                        .map(|q| {
                            let feature = studio.compose(&q.query)?.feature;
                            Ok(index.rank_of(&custom_tokens::Vector::from_vec(feature), &q.target)?)
                        })
                        .collect::<anyhow::Result<Vec<_>>>()?
                }
                _ => bail!("mrr needs exactly one of --ranks or --queries"),
            };
            vec![EvalReport::new("mrr", mrr(&ranks)?)]
        }
        Metric::Auc => {
            let scores = args.scores.context("--scores is required")?;
            let labels = args.labels.context("--labels is required")?;
            if labels.iter().any(|&l| l > 1) {
                bail!("labels must be 0 or 1");
            }
            let labels: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
            vec![EvalReport::new("auc", auc_roc(&scores, &labels)?)]
        }
        Metric::Recognition => {
            let concept = studio.store.concept(args.concept.as_deref().context("--concept is required")?)?;
            let (_, artifact) = studio.concept_token(&concept)?;
            let target = load_set(args.target.as_deref().context("--target is required")?)?;
            let parent = load_set(args.parent.as_deref().context("--parent is required")?)?;
            let other = load_set(args.other.as_deref().context("--other is required")?)?;
            let caption = args.caption.clone().unwrap_or_else(|| studio.default_caption().to_string());
            let split = if args.token_parent_split { ParentSplitPrompt::Token } else { ParentSplitPrompt::Parent };
            let r = recognition_splits(
                &artifact.token()?,
                &caption,
                studio.config.training.prompt_order,
                RecognitionSets { target: &target, parent: &parent, other: &other },
                split,
                studio.backbone.text.as_ref(),
                studio.backbone.image.as_ref(),
                studio.config.execution,
            )?;
            vec![r.target_vs_parent, r.target_vs_other, r.parent_vs_other]
        }
        Metric::ObjectContext => {
            let concept = studio.store.concept(args.concept.as_deref().context("--concept is required")?)?;
            let (_, artifact) = studio.concept_token(&concept)?;
            let path = args.setup.as_deref().context("--setup is required")?;
            let setup: ObjectContextSetup = serde_json::from_str(&std::fs::read_to_string(path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            let base = path.parent().unwrap_or(Path::new(""));
            let classes = setup
                .classes
                .iter()
                .map(|c| Ok((c.name.clone(), load_set(&base.join(&c.images))?)))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let bb = &studio.backbone;
            let r = object_context_accuracy(
                &artifact.token()?,
                &setup.contexts,
                &classes,
                &setup.true_class,
                setup.images_per_context,
                setup.seed,
                &bb.diffusion,
                bb.text.as_ref(),
                bb.image.as_ref(),
                studio.config.execution,
            )?;
            vec![r.object_accuracy, r.context_accuracy]
        }
    };
    if reports.len() == 1 {
        writeln!(out, "{}", format_scalar(reports[0].value))?;
    } else {
        for r in &reports {
            writeln!(out, "{}\t{}", r.metric, format_scalar(r.value))?;
        }
    }
    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["metric", "value"])?;
        for r in &reports {
            w.write_record([r.metric.clone(), r.value.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn report(
    studio: &Studio,
    concept: Option<String>,
    dir: &Path,
    attributes: Option<Vec<String>>,
    previews: usize,
    seed: u64,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let concept = match concept {
        Some(id) => studio.store.concept(&id)?,
        None => demo_concept(studio)?,
    };
    let (token_ref, token) = match &concept.token {
        Some(_) => {
            let (hash, artifact) = studio.concept_token(&concept)?;
            (hash, artifact.token()?)
        }
        None => ("initial".to_string(), demo_token(studio, &concept)?),
    };
    let text = studio.backbone.text.as_ref();
    let attribute_vectors =
        concept.attributes.iter().map(|a| attribute_embedding(a, text)).collect::<Result<Vec<_>, _>>()?;
    let mut written = Vec::new();

    let mut labeled = vec![
        ("token".to_string(), token.mean_row()),
        (concept.parent.clone(), attribute_embedding(&concept.parent, text)?),
    ];
    labeled.extend(concept.attributes.iter().cloned().zip(attribute_vectors.iter().cloned()));
    let aff = affinity(&labeled)?;
    let mut rows = Vec::new();
    for (i, a) in aff.labels.iter().enumerate() {
        for (j, b) in aff.labels.iter().enumerate() {
            rows.push(vec![a.clone(), b.clone(), aff.matrix[i][j].to_string()]);
        }
    }
    write_csv(&dir.join("affinity.csv"), &["row", "column", "cosine"], &rows)?;
    plot::heatmap(&aff.matrix, aff.clip_at, 8).save_png(dir.join("affinity.png"))?;
    written.extend(["affinity.csv", "affinity.png"]);

    let norms = norm_report(&attribute_vectors, &token)?;
    let mut rows: Vec<Vec<String>> = concept
        .attributes
        .iter()
        .zip(&norms.per_attribute_norms)
        .map(|(a, n)| vec![a.clone(), "attribute".into(), n.to_string()])
        .collect();
    rows.push(vec!["token".into(), "learned".into(), norms.learned_token_norm.to_string()]);
    write_csv(&dir.join("norms.csv"), &["name", "kind", "norm"], &rows)?;
    let mut bars = norms.per_attribute_norms.clone();
    bars.push(norms.learned_token_norm);
    plot::bar_chart(&bars, Some(bars.len() - 1), 320, 160).save_png(dir.join("norms.png"))?;
    written.extend(["norms.csv", "norms.png"]);

    let body = GairRequestBody {
        concept_id: concept.id.clone(),
        caption: None,
        attributes: attributes.unwrap_or_else(|| default_attributes(&concept)),
        weight_grid: None,
        previews_per_weight: Some(previews),
        seed,
        run_async: false,
    };
    let references = studio.concept_images(&concept)?;
    let g = studio.gair_with_token(&concept.id, &concept.parent, &token_ref, &token, &references, &body)?;
    std::fs::write(dir.join("gair_curve.csv"), &g.curve_csv)?;
    let points: Vec<(f64, f64)> = g.weight_grid.iter().copied().zip(g.per_weight_scores.iter().copied()).collect();
    plot::line_chart(&points, Some(g.optimal_weight), 320, 160).save_png(dir.join("gair_curve.png"))?;
    written.extend(["gair_curve.csv", "gair_curve.png"]);

    for name in written {
        writeln!(out, "{}", dir.join(name).display())?;
    }
    Ok(())
}

/// Concept photos, held-out photos, parent and other-class images, and a
/// manifest over the evaluation images.
fn write_toy_data(
    backbone: &custom_tokens::Backbone,
    dir: &Path,
    seed: u64,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let side = backbone.toy().map(|t| t.codec.image_side).unwrap_or(16);
    let toy = ToyConcept::two_tone_square();
    let parent = toy.parent.word();
    let sets: Vec<(&str, String, Vec<Image>)> = vec![
        ("concept", toy.id.clone(), toy.images(8, seed.wrapping_add(100), side)),
        ("held_out", toy.id.clone(), toy.images(8, seed.wrapping_add(200), side)),
        ("parent", parent.to_string(), sample_negatives(parent, 8, backbone, seed.wrapping_add(99_999))?),
        ("other", "circle".to_string(), parent_images(Shape::Circle, 4, seed.wrapping_add(400), side)),
        ("other", "triangle".to_string(), parent_images(Shape::Triangle, 4, seed.wrapping_add(500), side)),
    ];
    let mut manifest = csv::Writer::from_path(dir_create(dir)?.join("manifest.csv"))?;
    manifest.write_record(["image_path", "class_id", "caption"])?;
    for (sub, class, images) in &sets {
        let sub_dir = dir_create(&dir.join(sub))?;
        for (i, img) in images.iter().enumerate() {
            let name = format!("{class}-{i:03}.png");
            img.save_png(sub_dir.join(&name))?;
            if *sub != "concept" {
                manifest.write_record([format!("{sub}/{name}"), class.clone(), String::new()])?;
            }
        }
    }
    manifest.flush()?;
    writeln!(out, "{}", dir.display())?;
    Ok(())
}

fn dir_create(dir: &Path) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalars_drop_trailing_zeros() {
        assert_eq!(format_scalar(7.0 / 12.0), "0.58333");
        assert_eq!(format_scalar(0.3), "0.3");
        assert_eq!(format_scalar(1.0), "1");
        assert_eq!(format_scalar(-1e-9), "0");
    }

    #[test]
    fn mrr_needs_no_store() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Vec::new();
        let args = ["studio", "--root", dir.path().to_str().unwrap(), "eval", "--metric", "mrr", "--ranks", "1,2,4"];
        main_with_args(args.iter().map(|s| s.to_string()), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0.58333\n");
    }

    #[test]
    fn auc_from_flags() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Vec::new();
        let root = dir.path().to_str().unwrap();
        let args =
            ["studio", "--root", root, "eval", "--metric", "auc", "--scores", "0.9,-0.2,0.5", "--labels", "1,0,0"];
        main_with_args(args.iter().map(|s| s.to_string()), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "1\n");
    }
}
