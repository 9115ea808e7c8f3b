//! Learned custom tokens for vision-language models.
//!
//! A custom token is a short sequence of embedding rows injected into a
//! frozen text encoder. It is learned from a few concept images and a parent
//! word by jointly minimizing a diffusion denoising loss and a balanced
//! classification loss, with the rows constrained to the affine subspace
//! spanned by attribute embeddings. Learned tokens compose with text into
//! retrieval queries that can be previewed by generation, and the
//! composition weight can be chosen automatically ([`gair`]).

// `!(x > 0.0)` is used on purpose: it is also true for NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backbone;
pub mod diffusion;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod exec;
pub mod format;
pub mod gair;
pub mod image;
pub mod rng;
pub mod toy;
pub mod trainer;

pub use backbone::{Backbone, BackboneKind, BackboneSpec};
pub use error::{Error, Result};
pub use exec::Execution;
pub use image::Image;

/// Dense real vector used throughout.
pub type Vector = nalgebra::DVector<f64>;
