//! Desk-scale laboratory for hybrid fine-tuning of toy video diffusion
//! models with pixel-motion reward discriminators.
//!
//! The crate is layered bottom-up:
//!
//! * [`ndgrad`] — minimal reverse-mode autodiff (tensors, tape, AdamW,
//!   checkpoints), generic over the scalar type.
//! * [`diffusion`] — DDPM noise schedule, forward diffusion, denoising loss,
//!   ancestral and DDIM samplers.
//! * [`toyworld`] — procedural moving-shape clips with exact ground-truth
//!   flow and point tracks, plus the static-biased degraded dataset.
//! * [`features`] — transport residuals, Horn–Schunck flow, block-matching
//!   point tracks, and query sampling.
//! * [`rewards`] — the instantaneous and long-term motion discriminators,
//!   their BCE training, clipped-logit rewards, and EMA shadows.
//! * [`trainer`] — the hybrid fine-tuning loop with group-relative
//!   adversarial advantages, plus supervised and reward-weighted baselines.
//! * [`eval`] — motion/appearance/Fréchet metrics and the ablation runner.
//!
//! Everything below [`ndgrad`] and the schedule math works with any
//! [`scalar::Scalar`]; the aliases at the crate root pin the `f64`
//! instantiation that all experiments use.

pub mod config;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod fdcheck;
pub mod features;
pub mod ndgrad;
pub mod rewards;
pub mod rng;
pub mod scalar;
pub mod toyworld;
pub mod trainer;

pub use error::{Error, Result};

/// Concrete scalar type used by every experiment in this crate.
pub type Real = f64;

pub type Tensor = ndgrad::tensor::Tensor<Real>;
pub type Graph = ndgrad::graph::Graph<Real>;
pub type GradientMap = ndgrad::graph::GradientMap<Real>;
pub type ParamStore = ndgrad::store::ParamStore<Real>;
pub type AdamW = ndgrad::optim::AdamW<Real>;
pub type AdamWConfig = ndgrad::optim::AdamWConfig<Real>;
pub type NoiseSchedule = diffusion::schedule::Schedule<Real>;
