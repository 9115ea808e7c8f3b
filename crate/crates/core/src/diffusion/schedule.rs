use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vector;

/// Linear-beta DDPM schedule over timesteps `1..=T`; step 0 is the clean latent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas_cumprod: Vec<f64>,
}

/// One reverse update of the respaced sampler, from `alpha_bar` to `alpha_bar_prev`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReverseStep {
    pub t: usize,
    pub alpha_bar: f64,
    pub alpha_bar_prev: f64,
}

impl ReverseStep {
    pub fn beta(&self) -> f64 {
        1.0 - self.alpha_bar / self.alpha_bar_prev
    }

    pub fn variance(&self) -> f64 {
        self.beta() * (1.0 - self.alpha_bar_prev) / (1.0 - self.alpha_bar)
    }

    /// Posterior mean given the predicted noise.
    pub fn mean(&self, z: &Vector, eps: &Vector) -> Vector {
        let beta = self.beta();
        (z - eps * (beta / (1.0 - self.alpha_bar).sqrt())) / (1.0 - beta).sqrt()
    }
}

impl NoiseSchedule {
    pub fn linear(num_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::InvalidConfig("schedule needs at least one step".into()));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidConfig(format!("bad beta range [{beta_start}, {beta_end}]")));
        }
        let betas: Vec<f64> = if num_steps == 1 {
            vec![beta_start]
        } else {
            (0..num_steps).map(|i| beta_start + (beta_end - beta_start) * i as f64 / (num_steps - 1) as f64).collect()
        };
        let mut acc = 1.0;
        let alphas_cumprod = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Ok(Self { betas, alphas_cumprod })
    }

    /// Stable-diffusion-style default: 1000 steps, betas 1e-4..0.02.
    pub fn default_train() -> Self {
        Self::linear(1000, 1e-4, 0.02).expect("valid default schedule")
    }

    pub fn num_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alphas_cumprod[t - 1]
        }
    }

    /// `z_t = √ᾱ_t·z_0 + √(1−ᾱ_t)·η`.
    pub fn forward(&self, z0: &Vector, t: usize, noise: &Vector) -> Vector {
        let ab = self.alpha_bar(t);
        z0 * ab.sqrt() + noise * (1.0 - ab).sqrt()
    }

    /// Evenly spaced timesteps for an `steps`-step sampler, ending at `T`.
    pub fn respaced(&self, steps: usize) -> Result<Vec<ReverseStep>> {
        if steps == 0 {
            return Err(Error::InvalidConfig("sampler needs at least one step".into()));
        }
        let total = self.num_steps();
        let steps = steps.min(total);
        let ts: Vec<usize> = (0..=steps).map(|i| (i * total + steps / 2) / steps).collect();
        let mut out: Vec<ReverseStep> = (1..=steps)
            .map(|i| ReverseStep {
                t: ts[i],
                alpha_bar: self.alpha_bar(ts[i]),
                alpha_bar_prev: self.alpha_bar(ts[i - 1]),
            })
            .collect();
        out.reverse();
        Ok(out)
    }
}
