//! Latent-diffusion contract: codec, noise schedule, conditional denoiser,
//! the denoising loss `l_DM` and a seeded ancestral sampler `d(τ)`.

mod codec;
mod denoiser;
mod schedule;

pub use codec::{LatentCodec, PoolingCodec};
pub use denoiser::{ConditionalMeanDenoiser, Denoiser};
pub use schedule::{NoiseSchedule, ReverseStep};

use std::sync::Arc;

use crate::encoder::{normalize, normalize_vjp, ConditionVector};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::image::Image;
use crate::rng::{derive_seed, standard_normal, stream, uniform_index};
use crate::Vector;

const LOSS_STREAM: u64 = 0x4c4f_5353;

/// Anything that turns a condition into an image, deterministically in `seed`.
pub trait ImageGenerator: Send + Sync {
    fn generate(&self, condition: &ConditionVector, seed: u64) -> Result<Image>;
}

/// `n` images from seeds `seed..seed+n`; element `i` equals `generate(condition, seed + i)`.
pub fn generate_batch(
    generator: &dyn ImageGenerator,
    condition: &ConditionVector,
    n: usize,
    seed: u64,
    mode: Execution,
) -> Result<Vec<Image>> {
    exec::try_map_range(mode, n, |i| generator.generate(condition, seed.wrapping_add(i as u64)))
}

/// Loss value plus its gradient w.r.t. the raw (un-normalized) condition.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionLoss {
    pub loss: f64,
    pub grad_condition: Vector,
}

/// Frozen latent-diffusion model.
#[derive(Clone)]
pub struct DiffusionModel {
    codec: Arc<dyn LatentCodec>,
    denoiser: Arc<dyn Denoiser>,
    schedule: NoiseSchedule,
    sample_steps: usize,
    exec: Execution,
}

impl std::fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("latent_len", &self.codec.latent_len())
            .field("train_steps", &self.schedule.num_steps())
            .field("sample_steps", &self.sample_steps)
            .finish()
    }
}

impl DiffusionModel {
    pub fn new(
        codec: Arc<dyn LatentCodec>,
        denoiser: Arc<dyn Denoiser>,
        schedule: NoiseSchedule,
        sample_steps: usize,
    ) -> Result<Self> {
        if codec.latent_len() != denoiser.latent_len() {
            return Err(Error::DimensionMismatch { expected: codec.latent_len(), got: denoiser.latent_len() });
        }
        if sample_steps == 0 {
            return Err(Error::InvalidConfig("sample_steps must be >= 1".into()));
        }
        Ok(Self { codec, denoiser, schedule, sample_steps, exec: Execution::default() })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn codec(&self) -> &dyn LatentCodec {
        self.codec.as_ref()
    }

    pub fn denoiser(&self) -> &dyn Denoiser {
        self.denoiser.as_ref()
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn sample_steps(&self) -> usize {
        self.sample_steps
    }

    pub fn cond_dim(&self) -> usize {
        self.denoiser.cond_dim()
    }

    pub fn parameter_checksum(&self) -> String {
        format!("{}:{}", self.codec.parameter_checksum(), self.denoiser.parameter_checksum())
    }

    /// `E‖η − ν(z_t, t, τ)‖²` averaged over items and latent entries, with
    /// `t ~ U{1..T}` and `η ~ N(0, I)` drawn from per-item streams of `seed`.
    pub fn diffusion_loss(&self, images: &[Image], condition: &ConditionVector, seed: u64) -> Result<DiffusionLoss> {
        let latents: Vec<Vector> = exec::map_slice(self.exec, images, |img| self.codec.encode(img));
        self.diffusion_loss_latents(&latents, &condition.values, seed)
    }

    /// As [`Self::diffusion_loss`] on pre-encoded latents.
    pub fn diffusion_loss_latents(&self, latents: &[Vector], condition: &Vector, seed: u64) -> Result<DiffusionLoss> {
        if latents.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if condition.len() != self.denoiser.cond_dim() {
            return Err(Error::DimensionMismatch { expected: self.denoiser.cond_dim(), got: condition.len() });
        }
        let cond = normalize(condition)?;
        let total_steps = self.schedule.num_steps();
        let scale = 1.0 / (latents.len() * self.codec.latent_len()) as f64;
        let per_item = exec::map_range(self.exec, latents.len(), |i| {
            let z0 = &latents[i];
            let mut rng = stream(derive_seed(seed, LOSS_STREAM, i as u64));
            let t = 1 + uniform_index(&mut rng, total_steps);
            let eta = standard_normal(&mut rng, z0.len());
            let zt = self.schedule.forward(z0, t, &eta);
            let residual = self.denoiser.predict(&zt, t, &cond) - &eta;
            let grad = self.denoiser.cond_vjp(&zt, t, &cond, &(&residual * (2.0 * scale)));
            (residual.norm_squared() * scale, grad)
        });
        let mut loss = 0.0;
        let mut grad_unit = Vector::zeros(cond.len());
        for (l, g) in per_item {
            loss += l;
            grad_unit += g;
        }
        Ok(DiffusionLoss { loss, grad_condition: normalize_vjp(condition, &grad_unit) })
    }

    /// Final latent `z_0` of the `steps`-step ancestral sampler.
    pub fn sample_latent(&self, condition: &ConditionVector, steps: usize, seed: u64) -> Result<Vector> {
        if condition.dim() != self.denoiser.cond_dim() {
            return Err(Error::DimensionMismatch { expected: self.denoiser.cond_dim(), got: condition.dim() });
        }
        let cond = normalize(&condition.values)?;
        let mut rng = stream(seed);
        let mut z = standard_normal(&mut rng, self.codec.latent_len());
        for step in self.schedule.respaced(steps)? {
            let eps = self.denoiser.predict(&z, step.t, &cond);
            let mean = step.mean(&z, &eps);
            let var = step.variance();
            z = if var > 0.0 { mean + standard_normal(&mut rng, z.len()) * var.sqrt() } else { mean };
        }
        Ok(z)
    }

    /// `d(τ)`: samples a latent and decodes it.
    pub fn sample(&self, condition: &ConditionVector, steps: usize, seed: u64) -> Result<Image> {
        Ok(self.codec.decode(&self.sample_latent(condition, steps, seed)?))
    }

    pub fn generate_batch(&self, condition: &ConditionVector, n: usize, seed: u64) -> Result<Vec<Image>> {
        generate_batch(self, condition, n, seed, self.exec)
    }
}

impl ImageGenerator for DiffusionModel {
    fn generate(&self, condition: &ConditionVector, seed: u64) -> Result<Image> {
        self.sample(condition, self.sample_steps, seed)
    }
}
