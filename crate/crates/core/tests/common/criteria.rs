//! One function per acceptance criterion. Each returns a short detail line on
//! success and a description of the first violation otherwise.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use custom_tokens::diffusion::{DiffusionModel, ImageGenerator, NoiseSchedule, PoolingCodec};
use custom_tokens::embedding::{
    attribute_embedding, build_subspace, norm_report, project, AttributeSubspace, SubspaceSource, TokenEmbedding,
};
use custom_tokens::encoder::{
    assemble_with, encode_text, normalize, ConditionVector, PromptOrder, PromptTemplate, QueryComponents, SlotFill,
};
use custom_tokens::eval::{auc_roc, mrr, RetrievalIndex};
use custom_tokens::gair::{run_gair, GairModels, GairRequest};
use custom_tokens::rng::{derive_seed, standard_normal, stream};
use custom_tokens::toy::{recipe_config, vocab, ToyDataset};
use custom_tokens::trainer::{
    initial_rows, sample_negatives, token_vs_parent_accuracy, train_token, Objective, TokenArtifact, TrainingConfig,
    TrainingRequest,
};
use custom_tokens::{Execution, Vector};

use super::*;

pub type Outcome = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(limit: Duration, start: Instant, detail: String) -> Outcome {
    let took = start.elapsed();
    ensure!(took <= limit, "{detail}; took {took:.1?}, limit {limit:?}");
    Ok(format!("{detail}; {took:.1?}"))
}

fn max_abs(v: &Vector) -> f64 {
    v.amax()
}

/// Closest point to `x` in `mean + span(top-r eigenvectors of the covariance)`,
/// found by least squares on the eigenvector matrix.
fn eigen_oracle(vectors: &[Vector], rank: usize, x: &Vector) -> Vector {
    let (n, d) = (vectors.len(), x.len());
    let mean = vectors.iter().fold(Vector::zeros(d), |acc, v| acc + v) / n as f64;
    let centered = DMatrix::from_fn(n, d, |i, j| vectors[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let u = DMatrix::from_fn(d, rank, |i, j| eig.eigenvectors[(i, order[j])]);
    let coeffs = u.clone().svd(true, true).solve(&(x - &mean), 1e-12).expect("svd solve");
    &mean + u * coeffs
}

/// Closest point to `x` in the affine hull of `vectors`.
fn hull_oracle(vectors: &[Vector], x: &Vector) -> Vector {
    let base = &vectors[0];
    let diffs = DMatrix::from_fn(x.len(), vectors.len() - 1, |i, j| vectors[j + 1][i] - base[i]);
    let coeffs = diffs.clone().svd(true, true).solve(&(x - base), 1e-12).expect("svd solve");
    base + diffs * coeffs
}

pub fn projection_suite() -> Outcome {
    let start = Instant::now();
    let instances = 128;
    let mut worst = 0.0f64;
    let mut hull_cases = 0;
    for case in 0..instances {
        let mut rng = stream(derive_seed(0x9e0, case, 0));
        let d = rng.random_range(2..=32usize);
        let r = rng.random_range(1..=8usize.min(d));
        let n = rng.random_range(r + 1..=r + 6);
        let scale = rng.random_range(0.1..5.0);
        let vectors: Vec<Vector> = (0..n).map(|_| standard_normal(&mut rng, d) * scale).collect();
        let s = build_subspace(&vectors, r).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(s.rank() == r, "case {case}: rank {} != {r}", s.rank());
        let ortho = s.orthonormality_error();
        ensure!(ortho <= 1e-6, "case {case}: orthonormality error {ortho:e}");
        let fixed = max_abs(&(project(&s.mean, &s).unwrap() - &s.mean));
        ensure!(fixed <= 1e-6, "case {case}: mean moved by {fixed:e}");
        for _ in 0..4 {
            let x = standard_normal(&mut rng, d) * (2.0 * scale);
            let p = project(&x, &s).unwrap();
            let idem = max_abs(&(project(&p, &s).unwrap() - &p));
            ensure!(idem <= 1e-6, "case {case}: idempotence error {idem:e}");
            let oracle = max_abs(&(&p - eigen_oracle(&vectors, r, &x)));
            ensure!(oracle <= 1e-6, "case {case}: eigen oracle differs by {oracle:e}");
            worst = worst.max(idem).max(oracle).max(fixed).max(ortho);
            if r == n - 1 {
                let hull = max_abs(&(&p - hull_oracle(&vectors, &x)));
                ensure!(hull <= 1e-6, "case {case}: affine-hull oracle differs by {hull:e}");
                worst = worst.max(hull);
                hull_cases += 1;
            }
        }
    }
    within(
        Duration::from_secs(10),
        start,
        format!("{instances} instances ({hull_cases} full-hull checks), worst deviation {worst:.1e}"),
    )
}

fn random_token(seed: u64, dim: usize, k: usize) -> TokenEmbedding {
    let mut rng = stream(seed);
    let rows = (0..k).map(|_| standard_normal(&mut rng, dim) * 0.3).collect();
    TokenEmbedding::new("probe", "square", rows, None, false, "").unwrap()
}

pub fn composition_suite() -> Outcome {
    let start = Instant::now();
    let bb = toy_backbone();
    let text = bb.text.as_ref();
    let template = "a photo of a {*} {c}";
    let candidates = vocab::attribute_candidates();
    let mut worst = 0.0f64;
    let cases = 20;
    for case in 0..cases {
        let mut rng = stream(derive_seed(0xC0, case, 0));
        let token = random_token(derive_seed(0xC1, case, 0), text.embed_dim(), rng.random_range(1..=4));
        let count = rng.random_range(1..=8);
        let mut attributes: Vec<String> = candidates.choose_multiple(&mut rng, count).cloned().collect();
        let c = QueryComponents::compute(template, &token, "square", &attributes, PromptOrder::default(), text)
            .map_err(|e| e.to_string())?;

        // Independent encodes of each component, summed in name order.
        let unit = |fill: SlotFill<'_>| {
            let seq = assemble_with(template, fill, "square", PromptOrder::default(), text).unwrap();
            normalize(&encode_text(text, &seq).unwrap().values).unwrap()
        };
        let token_feature = unit(SlotFill::Token(&token));
        let mut names = attributes.clone();
        names.sort();
        let mut sum = Vector::zeros(token_feature.len());
        for a in &names {
            sum += unit(SlotFill::Text(a));
        }
        let mean = sum / names.len() as f64;

        let q1 = c.compose(1.0).unwrap().feature.values;
        let q0 = c.compose(0.0).unwrap().feature.values;
        ensure!(q1 == token_feature, "case {case}: w=1 differs from the token prompt feature");
        ensure!(q0 == mean, "case {case}: w=0 differs from the attribute mean");
        for i in 0..=10 {
            let w = i as f64 / 10.0;
            let q = c.compose(w).unwrap().feature.values;
            let affine = &q1 * w + &q0 * (1.0 - w);
            let err = max_abs(&(q - affine));
            ensure!(err <= 1e-6, "case {case}: affinity error {err:e} at w={w}");
            worst = worst.max(err);
        }
        attributes.shuffle(&mut rng);
        let shuffled = QueryComponents::compute(template, &token, "square", &attributes, PromptOrder::default(), text)
            .map_err(|e| e.to_string())?;
        for i in 0..=10 {
            let w = i as f64 / 10.0;
            ensure!(
                shuffled.compose(w).unwrap().feature == c.compose(w).unwrap().feature,
                "case {case}: permuting attributes changed the query at w={w}"
            );
        }
    }
    within(Duration::from_secs(5), start, format!("{cases} token/attribute sets, worst affinity error {worst:.1e}"))
}

struct GradientCase {
    lambdas: (f64, f64),
    projected: bool,
    tokens: usize,
    temperature: f64,
}

fn gradient_cases() -> Vec<GradientCase> {
    let lambdas = [(1.0, 0.0), (0.0, 1.0), (1.0, 1e-2), (1.0, 1e-5), (0.5, 0.3), (2.0, 0.1)];
    (0..24)
        .map(|i| GradientCase {
            lambdas: lambdas[i % lambdas.len()],
            projected: (i / lambdas.len()) % 2 == 0,
            tokens: 1 + i % 3,
            temperature: [100.0, 10.0, 1.0][(i / 2) % 3],
        })
        .collect()
}

/// Largest relative error between the analytic gradient and central
/// differences with step `h`, over the configurations above.
pub fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let bb = toy_backbone();
    let text = bb.text.as_ref();
    let data = ToyDataset::generate(bb, 5).map_err(|e| e.to_string())?;
    let negatives = sample_negatives("square", 8, bb, 77).map_err(|e| e.to_string())?;
    let subspace = AttributeSubspace::from_attributes(&data.attributes, text, None, SubspaceSource::Manual)
        .map_err(|e| e.to_string())?;
    let template = PromptTemplate::default();
    let h = 1e-4;
    let cases = gradient_cases();
    let mut worst = 0.0f64;
    for (n, case) in cases.iter().enumerate() {
        let config = TrainingConfig {
            lambda_sd: case.lambdas.0,
            lambda_ce: case.lambdas.1,
            num_tokens: case.tokens,
            temperature: case.temperature,
            init_jitter: 0.05,
            seed: n as u64,
            ..Default::default()
        };
        let sub = case.projected.then_some(&subspace);
        let objective = Objective::new(bb, &config, &template, "square", &data.train, &negatives, sub)
            .map_err(|e| e.to_string())?;
        let raw = initial_rows("square", text, sub, &config).map_err(|e| e.to_string())?;
        let sample = objective.step_sample(3 * n + 1);
        let (_, grads) = objective.evaluate(&raw, &sample).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = grads.iter().flat_map(|g| g.iter().copied()).collect();
        let mut numeric = Vec::with_capacity(analytic.len());
        for row in 0..raw.len() {
            for j in 0..raw[row].len() {
                let mut plus = raw.clone();
                let mut minus = raw.clone();
                plus[row][j] += h;
                minus[row][j] -= h;
                let lp = objective.evaluate(&plus, &sample).unwrap().0.total;
                let lm = objective.evaluate(&minus, &sample).unwrap().0.total;
                numeric.push((lp - lm) / (2.0 * h));
            }
        }
        let err = relative_error(&analytic, &numeric, 1e-12);
        ensure!(
            err <= 1e-3,
            "config {n} (λ={:?}, projected={}, k={}, T={}): relative error {err:e}",
            case.lambdas,
            case.projected,
            case.tokens,
            case.temperature
        );
        worst = worst.max(err);
    }
    within(
        Duration::from_secs(120),
        start,
        format!("{} configurations, worst relative error {worst:.1e} (step {h:e})", cases.len()),
    )
}

/// Pair-counting AUC as the exact integer ratio `(2·wins + ties) / (2·P·N)`.
fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut doubled, mut p, mut n) = (0u64, 0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            p += 1;
        } else {
            n += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            doubled += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    doubled as f64 / (2 * p * n) as f64
}

pub fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let m = mrr(&[1, 2, 4]).map_err(|e| e.to_string())?;
    ensure!((m - 7.0 / 12.0).abs() <= 1e-15, "MRR of ranks [1,2,4] is {m}, expected 7/12");
    ensure!(mrr(&[1]).unwrap() == 1.0 && mrr(&[2, 2]).unwrap() == 0.5, "MRR hand cases");

    let mut auc_cases = 0;
    let mut case = 0u64;
    while auc_cases < 200 {
        case += 1;
        let mut rng = stream(derive_seed(0xA0C, case, 0));
        let size = rng.random_range(2..=100usize);
        // Coarse scores so ties are common.
        let levels = rng.random_range(2..=20u32);
        let scores: Vec<f64> = (0..size).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<bool> = (0..size).map(|_| rng.random_bool(0.4)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let got = auc_roc(&scores, &labels).map_err(|e| e.to_string())?;
        let want = pair_count_auc(&scores, &labels);
        ensure!(got == want, "AUC instance {case}: {got} vs pair count {want}");
        auc_cases += 1;
    }

    for case in 0..100u64 {
        let mut rng = stream(derive_seed(0x5027, case, 0));
        let (n, d) = (rng.random_range(1..=60usize), rng.random_range(2..=16usize));
        let mut features: Vec<Vector> = (0..n).map(|_| standard_normal(&mut rng, d)).collect();
        // Duplicate some features to force score ties.
        for i in 1..n {
            if rng.random_bool(0.2) {
                features[i] = features[rng.random_range(0..i)].clone();
            }
        }
        let mut ids: Vec<String> = (0..n).map(|i| format!("img-{i:03}")).collect();
        ids.shuffle(&mut rng);
        let index = RetrievalIndex::from_features(
            ids.iter().cloned().zip(features).map(|(id, f)| (id, f, None)).collect(),
            "oracle",
        )
        .map_err(|e| e.to_string())?;
        let query = standard_normal(&mut rng, d);
        let got: Vec<String> = index.search(&query).map_err(|e| e.to_string())?.into_iter().map(|h| h.id).collect();
        // Rank by counting entries that must precede each one.
        let q = normalize(&query).unwrap();
        let scored: Vec<(f64, &str)> = index.entries().iter().map(|e| (q.dot(&e.feature), e.id.as_str())).collect();
        let mut want = vec![String::new(); n];
        for &(s, id) in &scored {
            let before = scored.iter().filter(|&&(t, other)| t > s || (t == s && other < id)).count();
            want[before] = id.to_string();
        }
        ensure!(got == want, "rank-vs-sort mismatch on index {case}");
    }
    within(
        Duration::from_secs(30),
        start,
        "MRR [1,2,4] = 7/12, 200 AUC instances, 100 index rankings exact".to_string(),
    )
}

fn stub_gair(landscape: &[f64], seed: u64, previews: usize) -> (f64, Vec<f64>) {
    let grid: Vec<f64> = (0..landscape.len()).map(|i| i as f64 / (landscape.len() - 1) as f64).collect();
    let request = GairRequest {
        token_ref: "stub".into(),
        caption: "a {*} thing".into(),
        parent: "thing".into(),
        attributes: vec!["red".into(), "blue".into()],
        weight_grid: grid,
        previews_per_weight: previews,
        seed,
    };
    let image = LandscapeImageEncoder { landscape: landscape.to_vec(), request_seed: seed, previews };
    let models = GairModels { text: &SwitchTextEncoder, image: &image, generator: &WeightEchoGenerator };
    let result = run_gair(&request, &switch_token(), &[reference_image()], models, Execution::default()).unwrap();
    (result.optimal_weight, result.per_weight_scores)
}

pub fn gair_correctness() -> Outcome {
    let start = Instant::now();
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let mut plateaus = 0;
    for case in 0..50u64 {
        let mut rng = stream(derive_seed(0x6A1, case, 0));
        // Quantized values make ties (plateaus) frequent.
        let levels = if case % 2 == 0 { 3 } else { 1000 };
        let landscape: Vec<f64> = (0..11).map(|_| rng.random_range(0..levels) as f64 / levels as f64 * 0.7).collect();
        let best = landscape.iter().cloned().fold(f64::MIN, f64::max);
        if landscape.iter().filter(|&&v| v == best).count() > 1 {
            plateaus += 1;
        }
        let (w, scores) = stub_gair(&landscape, case, 1 + (case % 3) as usize);
        let want = brute_force_argmax(&grid, &landscape);
        ensure!(w == want, "landscape {case}: w* = {w}, brute force {want} ({landscape:?}, scores {scores:?})");
    }
    ensure!(plateaus >= 5, "only {plateaus} landscapes had tied maxima");
    let peaked: Vec<f64> = grid.iter().map(|w| 0.7 - (w - 0.6f64).abs()).collect();
    let (w, _) = stub_gair(&peaked, 9, 4);
    ensure!(w == 0.6, "peaked landscape returned {w}");
    let (w, _) = stub_gair(&[0.3; 11], 9, 2);
    ensure!(w == 1.0, "flat landscape should tie-break to 1.0, got {w}");
    within(
        Duration::from_secs(30),
        start,
        format!("50 landscapes ({plateaus} with tied maxima), peaked at 0.6 -> 0.6, flat -> 1.0"),
    )
}

/// Per-seed measurements of the reference experiment.
#[derive(Clone, Debug)]
pub struct AblationRun {
    pub seed: u64,
    pub joint_accuracy: f64,
    pub diffusion_only_accuracy: f64,
    pub projected_norm: f64,
    pub unprojected_norm: f64,
    pub projected_z: f64,
}

pub struct Ablation {
    pub runs: Vec<AblationRun>,
    pub elapsed: Duration,
}

pub fn run_ablation() -> Result<Ablation, String> {
    let start = Instant::now();
    let bb = toy_backbone();
    let text = bb.text.as_ref();
    let data = ToyDataset::generate(bb, 0).map_err(|e| e.to_string())?;
    let subspace = AttributeSubspace::from_attributes(&data.attributes, text, None, SubspaceSource::Manual)
        .map_err(|e| e.to_string())?;
    let attribute_vectors: Vec<Vector> =
        data.attributes.iter().map(|a| attribute_embedding(a, text).unwrap()).collect();
    let template = PromptTemplate::default();
    let train = |config: &TrainingConfig, sub: Option<&AttributeSubspace>| {
        let request = TrainingRequest {
            concept_id: &data.concept.id,
            parent: &data.parent,
            images: &data.train,
            template: &template,
            subspace: sub,
            negatives: None,
        };
        train_token(bb, request, config).map(|o| o.token).map_err(|e| e.to_string())
    };
    let accuracy = |token: &TokenEmbedding| {
        token_vs_parent_accuracy(bb, token, &template.context_text, &data.held_out, &data.held_out_parents)
            .map_err(|e| e.to_string())
    };
    let mut runs = Vec::new();
    for seed in 0..3 {
        let joint = train(&recipe_config(seed, 1.0, 1e-2), Some(&subspace))?;
        let unprojected = train(&TrainingConfig { subspace_rank: None, ..recipe_config(seed, 1.0, 1e-2) }, None)?;
        let diffusion_only = train(&recipe_config(seed, 1.0, 0.0), Some(&subspace))?;
        let projected_report = norm_report(&attribute_vectors, &joint).map_err(|e| e.to_string())?;
        let unprojected_report = norm_report(&attribute_vectors, &unprojected).map_err(|e| e.to_string())?;
        runs.push(AblationRun {
            seed,
            joint_accuracy: accuracy(&joint)?,
            diffusion_only_accuracy: accuracy(&diffusion_only)?,
            projected_norm: projected_report.learned_token_norm,
            unprojected_norm: unprojected_report.learned_token_norm,
            projected_z: projected_report.learned_z_score(),
        });
    }
    Ok(Ablation { runs, elapsed: start.elapsed() })
}

pub fn ablation_trend(ablation: &Ablation) -> Outcome {
    let mut parts = Vec::new();
    for r in &ablation.runs {
        ensure!(r.joint_accuracy >= 0.9, "seed {}: joint-loss accuracy {:.3} < 0.9", r.seed, r.joint_accuracy);
        ensure!(
            r.diffusion_only_accuracy <= 0.65,
            "seed {}: diffusion-only accuracy {:.3} > 0.65",
            r.seed,
            r.diffusion_only_accuracy
        );
        parts.push(format!("seed {}: {:.3} vs {:.3}", r.seed, r.joint_accuracy, r.diffusion_only_accuracy));
    }
    let limit = Duration::from_secs(15 * 60);
    ensure!(ablation.elapsed <= limit, "took {:.1?}", ablation.elapsed);
    Ok(format!("{}; {:.1?}", parts.join(", "), ablation.elapsed))
}

pub fn norm_trend(ablation: &Ablation) -> Outcome {
    let mut parts = Vec::new();
    for r in &ablation.runs {
        ensure!(
            r.projected_norm <= r.unprojected_norm,
            "seed {}: projected norm {:.3} > unprojected {:.3}",
            r.seed,
            r.projected_norm,
            r.unprojected_norm
        );
        ensure!(
            r.projected_z.abs() <= 3.0,
            "seed {}: projected norm is {:.2} std from the mean",
            r.seed,
            r.projected_z
        );
        parts.push(format!(
            "seed {}: {:.3} <= {:.3}, z {:+.2}",
            r.seed, r.projected_norm, r.unprojected_norm, r.projected_z
        ));
    }
    Ok(parts.join(", "))
}

pub fn determinism_and_persistence() -> Outcome {
    let start = Instant::now();
    let bb = toy_backbone();
    let text = bb.text.as_ref();
    let data = ToyDataset::generate(bb, 0).map_err(|e| e.to_string())?;
    let subspace = AttributeSubspace::from_attributes(&data.attributes, text, None, SubspaceSource::Manual)
        .map_err(|e| e.to_string())?;
    let template = PromptTemplate::default();
    let config = TrainingConfig { iterations: 60, ..recipe_config(4, 1.0, 1e-2) };
    let artifact = || {
        let request = TrainingRequest {
            concept_id: &data.concept.id,
            parent: &data.parent,
            images: &data.train,
            template: &template,
            subspace: Some(&subspace),
            negatives: None,
        };
        train_token(bb, request, &config).and_then(|o| o.artifact(Some(&subspace)).to_json()).map_err(|e| e.to_string())
    };
    let first = artifact()?;
    let second = artifact()?;
    ensure!(first == second, "two identical runs produced different artifacts");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let token_path = dir.path().join("token.json");
    std::fs::write(&token_path, &first).unwrap();
    let loaded = TokenArtifact::load(&token_path).map_err(|e| e.to_string())?;
    loaded.save(dir.path().join("token2.json")).map_err(|e| e.to_string())?;
    ensure!(
        std::fs::read(&token_path).unwrap() == std::fs::read(dir.path().join("token2.json")).unwrap(),
        "token artifact does not round-trip bit-exactly"
    );
    let token = loaded.token().map_err(|e| e.to_string())?;
    ensure!(
        token.vectors().iter().all(|v| v.iter().all(|x| (*x as f32) as f64 == *x)),
        "loaded token rows are not float32 values"
    );

    let sub_text = subspace.to_json().map_err(|e| e.to_string())?;
    let sub_back = AttributeSubspace::from_json(&sub_text).map_err(|e| e.to_string())?;
    ensure!(sub_back.to_json().unwrap() == sub_text, "subspace file does not round-trip");

    let features: Vec<(String, Vector, Option<String>)> = data
        .held_out
        .iter()
        .enumerate()
        .map(|(i, img)| (format!("c{i}"), bb.image.encode_image(img).unwrap(), Some("concept".into())))
        .collect();
    let index = RetrievalIndex::from_features(features, bb.image.parameter_checksum()).map_err(|e| e.to_string())?;
    let index_path = dir.path().join("index.bin");
    index.save(&index_path).map_err(|e| e.to_string())?;
    let back = RetrievalIndex::load(&index_path).map_err(|e| e.to_string())?;
    ensure!(back == index, "index entries changed on reload");
    ensure!(back.to_bytes().unwrap() == std::fs::read(&index_path).unwrap(), "index file does not round-trip");
    within(Duration::from_secs(120), start, "artifact, token, subspace and index files bit-identical".into())
}

pub fn diffusion_loss_suite() -> Outcome {
    let start = Instant::now();
    let schedule = NoiseSchedule::default_train();
    let codec = std::sync::Arc::new(PoolingCodec::default());
    let z0 = standard_normal(&mut stream(1), 192) * 0.5;
    let perfect = DiffusionModel::new(
        codec.clone(),
        std::sync::Arc::new(PointDenoiser { z0: z0.clone(), schedule: schedule.clone() }),
        schedule.clone(),
        50,
    )
    .map_err(|e| e.to_string())?;
    let cond = Vector::from_element(1, 1.0);
    let loss = perfect.diffusion_loss_latents(&vec![z0.clone(); 64], &cond, 3).map_err(|e| e.to_string())?.loss;
    ensure!(loss <= 1e-20, "perfect predictor loss {loss:e}");

    let zero = DiffusionModel::new(codec, std::sync::Arc::new(ZeroDenoiser { latent_len: 192 }), schedule, 50)
        .map_err(|e| e.to_string())?;
    let mut rng = stream(2);
    let latents: Vec<Vector> = (0..10_000).map(|_| standard_normal(&mut rng, 192) * 0.3).collect();
    let zero_loss = zero.diffusion_loss_latents(&latents, &cond, 4).map_err(|e| e.to_string())?.loss;
    ensure!((zero_loss - 1.0).abs() <= 0.05, "zero predictor loss {zero_loss}");

    let bb = toy_backbone();
    let c = ConditionVector::raw(standard_normal(&mut stream(5), bb.text.dim()));
    let a = bb.diffusion.sample_latent(&c, 50, 11).map_err(|e| e.to_string())?;
    let b = bb.diffusion.sample_latent(&c, 50, 11).map_err(|e| e.to_string())?;
    let bits = |v: &Vector| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure!(bits(&a) == bits(&b), "sampler is not bit-deterministic");
    let other = bb.diffusion.sample_latent(&c, 50, 12).map_err(|e| e.to_string())?;
    ensure!(bits(&a) != bits(&other), "different seeds gave the same sample");
    let sequential = custom_tokens::diffusion::generate_batch(&bb.diffusion, &c, 6, 40, Execution::Sequential).unwrap();
    let parallel = custom_tokens::diffusion::generate_batch(&bb.diffusion, &c, 6, 40, Execution::Parallel).unwrap();
    ensure!(sequential == parallel, "sequential and parallel batches differ");
    ensure!(sequential[2] == bb.diffusion.generate(&c, 42).unwrap(), "batch element 2 is not seed + 2");
    within(
        Duration::from_secs(60),
        start,
        format!("perfect {loss:.1e}, zero {zero_loss:.4} over 10k draws, sampler bit-identical"),
    )
}

fn cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let argv = std::iter::once("studio").chain(args.iter().copied()).map(String::from);
    custom_tokens_studio::cli::main_with_args(argv, &mut out).map_err(|e| format!("studio {args:?}: {e:#}"))?;
    String::from_utf8(out).map_err(|e| e.to_string())
}

async fn post_status(app: &axum::Router, uri: &str, body: &str) -> u16 {
    use http_body_util::BodyExt;
    use tower::ServiceExt;
    let request = axum::http::Request::post(uri)
        .header("content-type", "application/json")
        .body(axum::body::Body::from(body.to_string()))
        .expect("request");
    let response = app.clone().oneshot(request).await.expect("router answers");
    let status = response.status().as_u16();
    let _ = response.into_body().collect().await;
    status
}

/// Train, compose, preview, retrieve and GAIR through the CLI on a fresh
/// store, then malformed bodies against every POST endpoint.
pub fn service_flow() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().join("store");
    let data = dir.path().join("data");
    let r = root.to_str().expect("utf-8 path");
    let base = ["--root", r, "--backbone", "toy:0"];
    let run = |args: &[&str]| cli(&[&base[..], args].concat());

    run(&["toy-data", "--out", data.to_str().expect("utf-8 path")])?;
    let concept = run(&["ingest", "--parent", "square", "--images", data.join("concept").to_str().expect("utf-8")])?;
    let concept = concept.trim();
    let token = run(&["train", "--concept", concept, "--iterations", "60", "--negatives", "8"])?;
    ensure!(std::path::Path::new(token.trim()).exists(), "train printed {token:?}");
    let composed: serde_json::Value = serde_json::from_str(&run(&[
        "compose",
        "--concept",
        concept,
        "--attributes",
        "teal,orange",
        "--weight",
        "0.6",
    ])?)
    .map_err(|e| e.to_string())?;
    ensure!(composed["weight"] == 0.6, "compose returned {composed}");
    let previews = run(&[
        "generate",
        "--concept",
        concept,
        "--count",
        "3",
        "--out",
        dir.path().join("gen").to_str().expect("utf-8"),
    ])?;
    ensure!(previews.lines().count() == 3, "generate printed {previews:?}");
    let index = run(&["index", "--manifest", data.join("manifest.csv").to_str().expect("utf-8")])?;
    let hits = run(&["retrieve", "--index", index.trim(), "--concept", concept, "--top", "4"])?;
    ensure!(hits.lines().count() == 4, "retrieve printed {hits:?}");
    let w =
        run(&["gair", "--concept", concept, "--attributes", "teal,orange", "--grid", "0,0.5,1", "--previews", "2"])?;
    let w: f64 = w.trim().parse().map_err(|e| format!("gair printed {w:?}: {e}"))?;
    ensure!([0.0, 0.5, 1.0].contains(&w), "gair weight {w} is off the grid");

    let config = custom_tokens_studio::StudioConfig { root: root.clone(), ..Default::default() };
    let studio = std::sync::Arc::new(custom_tokens_studio::Studio::open(config).map_err(|e| e.to_string())?);
    let app = custom_tokens_studio::api::router(studio);
    let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(|e| e.to_string())?;
    let train_uri = format!("/concepts/{concept}/train");
    let malformed: [(&str, &str); 9] = [
        ("/concepts", "{"),
        ("/concepts", r#"{"parent": "square", "images": "x"}"#),
        (&train_uri, r#"{"iterations": -1}"#),
        ("/queries/compose", r#"{"concept_id": 7}"#),
        ("/queries/compose", r#"{"concept_id": "concept-000001", "weight": 2}"#),
        ("/queries/preview", r#"{"query": {}}"#),
        ("/queries/retrieve", r#"{"index_id": "x", "extra": true}"#),
        ("/queries/gair", r#"{"concept_id": "concept-000001", "attributes": [], "weight_grid": [0.5]}"#),
        ("/indexes", r#"[]"#),
    ];
    for (uri, body) in malformed {
        let status = runtime.block_on(post_status(&app, uri, body));
        ensure!(status == 400, "POST {uri} {body} gave {status}");
    }
    within(
        Duration::from_secs(300),
        start,
        format!("cli flow ok (gair w* = {w}), {} malformed bodies rejected with 400", malformed.len()),
    )
}
