#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;

use std::sync::OnceLock;

use custom_tokens::diffusion::ImageGenerator;
use custom_tokens::embedding::TokenEmbedding;
use custom_tokens::encoder::{ConditionVector, ImageEncoder, TextEncoder};
use custom_tokens::gair::context_seed;
use custom_tokens::{Backbone, BackboneSpec, Error, Image, Result, Vector};

pub fn toy_backbone() -> &'static Backbone {
    static BACKBONE: OnceLock<Backbone> = OnceLock::new();
    BACKBONE.get_or_init(|| Backbone::load(&BackboneSpec::toy(0)).expect("toy backbone loads"))
}

pub fn vec3(a: f64, b: f64, c: f64) -> Vector {
    Vector::from_vec(vec![a, b, c])
}

/// Every vocabulary word embeds to `e2`; a sequence containing any injected
/// row (first entry non-zero) encodes to `e1`, otherwise to `e2`.
pub struct SwitchTextEncoder;

impl TextEncoder for SwitchTextEncoder {
    fn embed_dim(&self) -> usize {
        3
    }
    fn dim(&self) -> usize {
        3
    }
    fn context_len(&self) -> usize {
        64
    }
    fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        Ok(text.split_whitespace().map(|_| 0).collect())
    }
    fn embed(&self, ids: &[u32]) -> Result<Vec<Vector>> {
        Ok(ids.iter().map(|_| vec3(0.0, 1.0, 0.0)).collect())
    }
    fn encode_rows(&self, rows: &[Vector]) -> Result<Vector> {
        Ok(if rows.iter().any(|r| r[0] != 0.0) { vec3(1.0, 0.0, 0.0) } else { vec3(0.0, 1.0, 0.0) })
    }
    fn rows_vjp(&self, rows: &[Vector], _grad: &Vector) -> Result<Vec<Vector>> {
        Ok(vec![Vector::zeros(3); rows.len()])
    }
    fn parameter_checksum(&self) -> String {
        "switch".into()
    }
}

pub fn switch_token() -> TokenEmbedding {
    TokenEmbedding::new("stub", "thing", vec![vec3(1.0, 0.0, 0.0)], None, false, "").unwrap()
}

/// Writes the composition weight recovered from `q = w·e1 + (1−w)·e2` and
/// the seed into the pixels of a 4×1 image.
pub struct WeightEchoGenerator;

impl ImageGenerator for WeightEchoGenerator {
    fn generate(&self, condition: &ConditionVector, seed: u64) -> Result<Image> {
        let q = &condition.values;
        let w = (q[0] / (q[0] + q[1])) as f32;
        let mut bytes = w.to_le_bytes().to_vec();
        bytes.extend(seed.to_le_bytes());
        Image::new(4, 1, bytes)
    }
}

/// A concept reference image (width 1).
pub fn reference_image() -> Image {
    Image::filled(1, 1, [7, 7, 7])
}

/// Image encoder that turns echo images into features whose preview score
/// is exactly `landscape[grid index of w]`.
///
/// References map to `e1`, context images (recognised by their seeds) to
/// `e2`, previews to `L(e1 + e2) + sqrt(1 − 2L²)·e3`, so the cosine to both
/// reference sets equals `L`.
pub struct LandscapeImageEncoder {
    pub landscape: Vec<f64>,
    pub request_seed: u64,
    pub previews: usize,
}

impl LandscapeImageEncoder {
    fn decode(image: &Image) -> (f64, u64) {
        let p = image.pixels();
        let w = f32::from_le_bytes(p[0..4].try_into().unwrap()) as f64;
        let seed = u64::from_le_bytes(p[4..12].try_into().unwrap());
        (w, seed)
    }
}

impl ImageEncoder for LandscapeImageEncoder {
    fn dim(&self) -> usize {
        3
    }
    fn encode_image(&self, image: &Image) -> Result<Vector> {
        if image.width() == 1 {
            return Ok(vec3(1.0, 0.0, 0.0));
        }
        let (w, seed) = Self::decode(image);
        if (0..self.previews).any(|j| context_seed(self.request_seed, j) == seed) {
            return Ok(vec3(0.0, 1.0, 0.0));
        }
        let steps = (self.landscape.len() - 1).max(1) as f64;
        let index = (w * steps).round() as usize;
        let l = *self.landscape.get(index).ok_or_else(|| Error::InvalidArgument(format!("w {w} off grid")))?;
        Ok(vec3(l, l, (1.0 - 2.0 * l * l).max(0.0).sqrt()))
    }
    fn parameter_checksum(&self) -> String {
        "landscape".into()
    }
}

/// Exhaustive argmax with ties toward the larger weight.
pub fn brute_force_argmax(grid: &[f64], scores: &[f64]) -> f64 {
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let last = scores.iter().rposition(|&s| s == best).unwrap();
    grid[last]
}

use custom_tokens::diffusion::{Denoiser, NoiseSchedule};

/// Knows the single clean latent `z0`, so it recovers the noise exactly.
pub struct PointDenoiser {
    pub z0: Vector,
    pub schedule: NoiseSchedule,
}

impl Denoiser for PointDenoiser {
    fn latent_len(&self) -> usize {
        self.z0.len()
    }
    fn cond_dim(&self) -> usize {
        1
    }
    fn predict(&self, z_t: &Vector, t: usize, _cond: &Vector) -> Vector {
        let ab = self.schedule.alpha_bar(t);
        (z_t - &self.z0 * ab.sqrt()) / (1.0 - ab).sqrt()
    }
    fn cond_vjp(&self, _z_t: &Vector, _t: usize, cond: &Vector, _grad_out: &Vector) -> Vector {
        Vector::zeros(cond.len())
    }
    fn parameter_checksum(&self) -> String {
        "point".into()
    }
}

/// Always predicts zero noise.
pub struct ZeroDenoiser {
    pub latent_len: usize,
}

impl Denoiser for ZeroDenoiser {
    fn latent_len(&self) -> usize {
        self.latent_len
    }
    fn cond_dim(&self) -> usize {
        1
    }
    fn predict(&self, z_t: &Vector, _t: usize, _cond: &Vector) -> Vector {
        Vector::zeros(z_t.len())
    }
    fn cond_vjp(&self, _z_t: &Vector, _t: usize, cond: &Vector, _grad_out: &Vector) -> Vector {
        Vector::zeros(cond.len())
    }
    fn parameter_checksum(&self) -> String {
        "zero".into()
    }
}

/// Relative error `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}
