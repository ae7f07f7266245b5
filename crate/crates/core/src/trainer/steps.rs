//! Single optimizer steps: the hybrid generator update, the plain denoising
//! update it reduces to at zero advantage, and the reward-weighted variant.

use rand::Rng;

use crate::diffusion::{denoising_mse, ConvDenoiser, NoiseDraw, Video};
use crate::error::{Error, Result};
use crate::ndgrad::graph::NodeId;
use crate::ndgrad::store::ParamId;
use crate::rng::RunRng;
use crate::trainer::buffer::RolloutBuffer;
use crate::trainer::config::ShiftConfig;
use crate::{AdamW, Graph, NoiseSchedule, Tensor};

/// What one generator step did: the two loss terms, the noise draws each
/// branch consumed, and which parameters received gradients.
#[derive(Debug)]
pub struct StepReport {
    pub awr_loss: f64,
    pub sft_loss: f64,
    pub fake_draw: NoiseDraw,
    pub real_draw: NoiseDraw,
    pub touched: Vec<ParamId>,
}

fn draw_noise(shape: &[usize], sched: &NoiseSchedule, rng: &mut RunRng) -> (usize, Tensor) {
    let t = rng.gen_range(1..=sched.len());
    (t, Tensor::randn(shape, 1.0, rng))
}

/// `scale * mean_b |eps - eps_theta(x_t_b, t)|^2` over the listed clips, all
/// noised with one shared `(t, eps)` draw.
fn denoising_batch_term(
    g: &mut Graph,
    den: &ConvDenoiser,
    clips: &[&Video],
    t: usize,
    eps: &Tensor,
    sched: &NoiseSchedule,
    scale: f64,
) -> Result<NodeId> {
    let mut terms = Vec::with_capacity(clips.len());
    for clip in clips {
        terms.push(denoising_mse(g, den, clip.frames(), t, eps, sched)?);
    }
    let stacked = g.concat(&terms)?;
    let mean = g.mean(stacked);
    Ok(g.scale(mean, scale))
}

/// `mean_b w_b |eps - eps_theta(x_t_b, t)|^2` with per-clip weights.
fn weighted_batch_term(
    g: &mut Graph,
    den: &ConvDenoiser,
    clips: &[&Video],
    weights: &[f64],
    t: usize,
    eps: &Tensor,
    sched: &NoiseSchedule,
) -> Result<NodeId> {
    let mut terms = Vec::with_capacity(clips.len());
    for clip in clips {
        terms.push(denoising_mse(g, den, clip.frames(), t, eps, sched)?);
    }
    let stacked = g.concat(&terms)?;
    let w = g.leaf(Tensor::from_vec(&[weights.len()], weights.to_vec())?);
    let weighted = g.mul(stacked, w)?;
    Ok(g.mean(weighted))
}

/// One hybrid update: an advantage-weighted denoising term on fake clips
/// plus the anchoring denoising term on real clips. With noise alignment
/// both branches share one `(t, eps)` draw; otherwise the real branch draws
/// its own.
#[allow(clippy::too_many_arguments)]
pub fn shift_step(
    den: &mut ConvDenoiser,
    buffer: &RolloutBuffer,
    fake_idx: &[usize],
    real_idx: &[usize],
    sched: &NoiseSchedule,
    cfg: &ShiftConfig,
    opt: &mut AdamW,
    rng: &mut RunRng,
) -> Result<StepReport> {
    if fake_idx.is_empty() || real_idx.is_empty() {
        return Err(Error::contract(
            "generator step needs nonempty fake and real batches",
        ));
    }
    let shape = buffer.fakes[0].frames().shape().to_vec();
    let (t_fake, eps_fake) = draw_noise(&shape, sched, rng);
    let (t_real, eps_real) = if cfg.noise_align {
        (t_fake, eps_fake.clone())
    } else {
        draw_noise(&shape, sched, rng)
    };

    let fakes: Vec<&Video> = fake_idx.iter().map(|&b| &buffer.fakes[b]).collect();
    let weights: Vec<f64> = fake_idx.iter().map(|&b| buffer.advantages_fake[b]).collect();
    let reals: Vec<&Video> = real_idx.iter().map(|&b| &buffer.reals[b]).collect();

    let mut g = Graph::new();
    let awr = weighted_batch_term(&mut g, den, &fakes, &weights, t_fake, &eps_fake, sched)?;
    let sft = denoising_batch_term(&mut g, den, &reals, t_real, &eps_real, sched, cfg.lambda_sft)?;
    let total = g.add(awr, sft)?;

    let awr_loss = g.value(awr).data()[0];
    let sft_loss = g.value(sft).data()[0];
    if !awr_loss.is_finite() || !sft_loss.is_finite() {
        return Err(Error::numerical(format!(
            "generator loss diverged: weighted term {awr_loss}, anchor term {sft_loss}"
        )));
    }
    let grads = g.backward(total)?;
    let touched: Vec<ParamId> = grads.keys().copied().collect();
    opt.step(den.store_mut(), &grads)?;
    Ok(StepReport {
        awr_loss,
        sft_loss,
        fake_draw: NoiseDraw::of(t_fake, &eps_fake),
        real_draw: NoiseDraw::of(t_real, &eps_real),
        touched,
    })
}

/// One plain denoising update on `clips`, sharing a single `(t, eps)` draw
/// across the batch. This is the exact code path the hybrid step reduces to
/// when every advantage is zero.
pub fn sft_step(
    den: &mut ConvDenoiser,
    clips: &[&Video],
    sched: &NoiseSchedule,
    opt: &mut AdamW,
    rng: &mut RunRng,
) -> Result<(f64, NoiseDraw)> {
    if clips.is_empty() {
        return Err(Error::contract("denoising step needs a nonempty batch"));
    }
    let shape = clips[0].frames().shape().to_vec();
    let (t, eps) = draw_noise(&shape, sched, rng);
    let mut g = Graph::new();
    let loss = denoising_batch_term(&mut g, den, clips, t, &eps, sched, 1.0)?;
    let value = g.value(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::numerical(format!("denoising loss diverged: {value}")));
    }
    let grads = g.backward(loss)?;
    opt.step(den.store_mut(), &grads)?;
    Ok((value, NoiseDraw::of(t, &eps)))
}

/// One reward-weighted denoising update on a fixed fake buffer.
pub fn rwr_step(
    den: &mut ConvDenoiser,
    clips: &[&Video],
    weights: &[f64],
    sched: &NoiseSchedule,
    opt: &mut AdamW,
    rng: &mut RunRng,
) -> Result<(f64, NoiseDraw)> {
    if clips.is_empty() || clips.len() != weights.len() {
        return Err(Error::contract(format!(
            "weighted step needs aligned nonempty batches, got {} clips and {} weights",
            clips.len(),
            weights.len()
        )));
    }
    let shape = clips[0].frames().shape().to_vec();
    let (t, eps) = draw_noise(&shape, sched, rng);
    let mut g = Graph::new();
    let loss = weighted_batch_term(&mut g, den, clips, weights, t, &eps, sched)?;
    let value = g.value(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::numerical(format!("weighted loss diverged: {value}")));
    }
    let grads = g.backward(loss)?;
    opt.step(den.store_mut(), &grads)?;
    Ok((value, NoiseDraw::of(t, &eps)))
}

/// Exponential reward weight `exp(r / beta)`, clamped at `exp(10)`. The
/// second value reports whether the clamp engaged.
pub fn rwr_weight(reward: f64, beta: f64) -> (f64, bool) {
    let exponent = reward / beta;
    if exponent > 10.0 {
        ((10.0f64).exp(), true)
    } else {
        (exponent.exp(), false)
    }
}
