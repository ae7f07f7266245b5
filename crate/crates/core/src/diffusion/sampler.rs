//! Reverse-process samplers: stochastic ancestral and deterministic DDIM.
//!
//! Both walk an evenly strided sub-schedule and consume the predictor only
//! through [`NoisePredictor`], so training code can swap them freely.

use rand::Rng;

use crate::diffusion::denoiser::NoisePredictor;
use crate::diffusion::schedule::Schedule;
use crate::error::Result;
use crate::{Real, Tensor};

/// Which reverse-process sampler to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerKind {
    #[default]
    Ancestral,
    Ddim,
}

impl SamplerKind {
    pub fn sample<D: NoisePredictor + ?Sized, R: Rng + ?Sized>(
        self,
        den: &D,
        sched: &Schedule<Real>,
        shape: &[usize],
        steps: usize,
        rng: &mut R,
    ) -> Result<Tensor> {
        match self {
            SamplerKind::Ancestral => ancestral_sample(den, sched, shape, steps, rng),
            SamplerKind::Ddim => ddim_sample(den, sched, shape, steps, rng),
        }
    }
}

/// Stochastic reverse chain from `x_T ~ N(0, I)`:
/// `x_prev = (x - beta_eff / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_eff) + sigma z`,
/// with effective coefficients taken between consecutive strided timesteps
/// and the noise term omitted on the final transition.
pub fn ancestral_sample<D: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    den: &D,
    sched: &Schedule<Real>,
    shape: &[usize],
    steps: usize,
    rng: &mut R,
) -> Result<Tensor> {
    let ts = sched.strided_timesteps(steps)?;
    let mut x = Tensor::randn(shape, 1.0, rng);
    for (i, &t) in ts.iter().enumerate() {
        let t_prev = ts.get(i + 1).copied().unwrap_or(0);
        let ab_t = sched.alpha_bar(t);
        let ab_prev = sched.alpha_bar(t_prev);
        let alpha_eff = ab_t / ab_prev;
        let beta_eff = 1.0 - alpha_eff;
        let eps_hat = den.predict_noise(&x, t)?;

        let noise_coef = beta_eff / (1.0 - ab_t).sqrt();
        let mean_scale = 1.0 / alpha_eff.sqrt();
        let last = i + 1 == ts.len();
        let sigma = if last {
            0.0
        } else {
            ((1.0 - ab_prev) / (1.0 - ab_t) * beta_eff).sqrt()
        };
        let z = if last {
            None
        } else {
            Some(Tensor::randn(shape, 1.0, rng))
        };

        let mut data = Vec::with_capacity(x.numel());
        for idx in 0..x.numel() {
            let mu = (x.data()[idx] - noise_coef * eps_hat.data()[idx]) * mean_scale;
            let noise = z.as_ref().map_or(0.0, |z| sigma * z.data()[idx]);
            data.push(mu + noise);
        }
        x = Tensor::from_vec(shape, data)?;
    }
    Ok(x)
}

/// Deterministic DDIM chain (eta = 0). The RNG is consumed only for the
/// initial `x_T` draw; the rest of the chain is noise-free, so identical
/// RNG state gives bit-identical outputs.
pub fn ddim_sample<D: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    den: &D,
    sched: &Schedule<Real>,
    shape: &[usize],
    steps: usize,
    rng: &mut R,
) -> Result<Tensor> {
    let ts = sched.strided_timesteps(steps)?;
    let mut x = Tensor::randn(shape, 1.0, rng);
    for (i, &t) in ts.iter().enumerate() {
        let t_prev = ts.get(i + 1).copied().unwrap_or(0);
        let ab_t = sched.alpha_bar(t);
        let ab_prev = sched.alpha_bar(t_prev);
        let eps_hat = den.predict_noise(&x, t)?;

        let x0_scale = 1.0 / ab_t.sqrt();
        let eps_scale = (1.0 - ab_t).sqrt();
        let (a, b) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
        let mut data = Vec::with_capacity(x.numel());
        for idx in 0..x.numel() {
            let x0_hat = (x.data()[idx] - eps_scale * eps_hat.data()[idx]) * x0_scale;
            data.push(a * x0_hat + b * eps_hat.data()[idx]);
        }
        x = Tensor::from_vec(shape, data)?;
    }
    Ok(x)
}
