//! DDPM core: schedule, denoiser, training loss, and samplers.

pub mod denoiser;
pub mod loss;
pub mod sampler;
pub mod schedule;
pub mod video;

pub use denoiser::{ConvDenoiser, DenoiserConfig, GraphNoisePredictor, NoisePredictor, PerfectDenoiser};
pub use loss::{denoising_mse, forward_diffuse, simple_loss, LossSample, NoiseDraw};
pub use sampler::{ancestral_sample, ddim_sample, SamplerKind};
pub use schedule::Schedule;
pub use video::Video;
