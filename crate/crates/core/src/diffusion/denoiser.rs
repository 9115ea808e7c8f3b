use nalgebra::DMatrix;

use super::NoiseSchedule;
use crate::format::sha256_hex;
use crate::Vector;

/// Conditional noise predictor `ν_θ(z_t, t, τ)`.
///
/// `cond` is the unit-normalized condition; the model owning the denoiser
/// takes care of normalization.
pub trait Denoiser: Send + Sync {
    fn latent_len(&self) -> usize;
    fn cond_dim(&self) -> usize;
    fn predict(&self, z_t: &Vector, t: usize, cond: &Vector) -> Vector;
    /// Gradient of `<grad_out, predict(z_t, t, cond)>` w.r.t. `cond`.
    fn cond_vjp(&self, z_t: &Vector, t: usize, cond: &Vector, grad_out: &Vector) -> Vector;
    fn parameter_checksum(&self) -> String;
}

/// Two-layer conditional denoiser.
///
/// Layer one maps the condition to a latent mean
/// `m(τ) = W_out·tanh(W_in·τ + b_in) + b_out`; layer two is the
/// per-timestep read-out that is the exact noise posterior mean when
/// `z_0 ~ N(m(τ), σ²I)`:
///
/// `ν(z_t, t, τ) = √(1−ᾱ_t)·(z_t − √ᾱ_t·m(τ)) / (ᾱ_t·σ² + 1 − ᾱ_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalMeanDenoiser {
    schedule: NoiseSchedule,
    w_in: DMatrix<f64>,
    b_in: Vector,
    w_out: DMatrix<f64>,
    b_out: Vector,
    data_variance: f64,
}

impl ConditionalMeanDenoiser {
    pub fn new(
        schedule: NoiseSchedule,
        w_in: DMatrix<f64>,
        b_in: Vector,
        w_out: DMatrix<f64>,
        b_out: Vector,
        data_variance: f64,
    ) -> Self {
        assert_eq!(w_in.nrows(), b_in.len());
        assert_eq!(w_out.ncols(), w_in.nrows());
        assert_eq!(w_out.nrows(), b_out.len());
        assert!(data_variance >= 0.0);
        Self { schedule, w_in, b_in, w_out, b_out, data_variance }
    }

    pub fn hidden(&self, cond: &Vector) -> Vector {
        (&self.w_in * cond + &self.b_in).map(f64::tanh)
    }

    /// `m(τ)`: the latent mean the model associates with a condition.
    pub fn conditional_mean(&self, cond: &Vector) -> Vector {
        &self.w_out * self.hidden(cond) + &self.b_out
    }

    pub fn data_variance(&self) -> f64 {
        self.data_variance
    }

    fn readout_gain(&self, t: usize) -> f64 {
        let ab = self.schedule.alpha_bar(t);
        (1.0 - ab).sqrt() / (ab * self.data_variance + 1.0 - ab)
    }
}

impl Denoiser for ConditionalMeanDenoiser {
    fn latent_len(&self) -> usize {
        self.b_out.len()
    }

    fn cond_dim(&self) -> usize {
        self.w_in.ncols()
    }

    fn predict(&self, z_t: &Vector, t: usize, cond: &Vector) -> Vector {
        let ab = self.schedule.alpha_bar(t);
        (z_t - self.conditional_mean(cond) * ab.sqrt()) * self.readout_gain(t)
    }

    fn cond_vjp(&self, _z_t: &Vector, t: usize, cond: &Vector, grad_out: &Vector) -> Vector {
        let ab = self.schedule.alpha_bar(t);
        let g_mean = grad_out * (-self.readout_gain(t) * ab.sqrt());
        let h = self.hidden(cond);
        let g_hidden = self.w_out.tr_mul(&g_mean);
        let g_pre = g_hidden.component_mul(&h.map(|x| 1.0 - x * x));
        self.w_in.tr_mul(&g_pre)
    }

    fn parameter_checksum(&self) -> String {
        let mut bytes = Vec::new();
        for m in [&self.w_in, &self.w_out] {
            bytes.extend(m.iter().flat_map(|x| x.to_le_bytes()));
        }
        for v in [&self.b_in, &self.b_out] {
            bytes.extend(v.iter().flat_map(|x| x.to_le_bytes()));
        }
        bytes.extend(self.data_variance.to_le_bytes());
        sha256_hex(&bytes)
    }
}
