//! Rollout buffers: on-policy fakes, dataset reals, their rewards under the
//! shadow discriminators, and the advantage weights the generator step
//! consumes.

use rand::Rng;
use rayon::prelude::*;

use crate::diffusion::{SamplerKind, Video};
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::rewards::{combined_reward, CombineMode, Discriminator, RewardConfig};
use crate::rng::{derive_rng, salt, RunRng};
use crate::toyworld::Dataset;
use crate::trainer::advantages::compute_advantages;
use crate::trainer::config::{AwrForm, ShiftConfig};
use crate::{NoiseSchedule, ParamStore, Tensor};

use crate::diffusion::denoiser::NoisePredictor;
use crate::rewards::{ImrDiscriminator, LmrDiscriminator};

/// One iteration's training material. `advantages_fake` holds the weights
/// the generator loss applies (temperature included); `advantages_real` is
/// the same shaping applied to real rewards, kept for diagnostics only.
pub struct RolloutBuffer {
    pub fakes: Vec<Video>,
    pub reals: Vec<Video>,
    pub rewards_fake: Vec<f64>,
    pub rewards_real: Vec<f64>,
    pub advantages_fake: Vec<f64>,
    pub advantages_real: Vec<f64>,
    /// Noise-group index of each fake rollout.
    pub group_of: Vec<usize>,
    pub passes_used: usize,
}

/// Discriminator inputs for every buffer entry, extracted once and reused
/// by each inner-loop discriminator step.
pub struct BufferFeatures {
    pub imr_fake: Vec<Tensor>,
    pub imr_real: Vec<Tensor>,
    pub lmr_fake: Vec<Tensor>,
    pub lmr_real: Vec<Tensor>,
}

/// The frozen scoring side of the reward models: EMA shadow parameters for
/// both discriminators.
pub struct ShadowScorer<'a> {
    pub imr: &'a ImrDiscriminator,
    pub imr_store: &'a ParamStore,
    pub lmr: &'a LmrDiscriminator,
    pub lmr_store: &'a ParamStore,
}

impl ShadowScorer<'_> {
    /// Combined reward of one clip's features under the reward settings.
    /// The track logit is skipped when the combine mode ignores it.
    pub fn score(
        &self,
        imr_features: &Tensor,
        lmr_features: &Tensor,
        reward_cfg: &RewardConfig,
    ) -> Result<f64> {
        let imr_logit = if reward_cfg.combine == CombineMode::LmrOnly {
            0.0
        } else {
            self.imr.score(self.imr_store, imr_features)?
        };
        let lmr_logit = if reward_cfg.combine == CombineMode::ImrOnly {
            0.0
        } else {
            self.lmr.score(self.lmr_store, lmr_features)?
        };
        Ok(combined_reward(imr_logit, lmr_logit, reward_cfg))
    }
}

/// Per-rollout RNG. Members of one group derive from a shared group seed,
/// which is the whole content of "grouped rollouts" for an unconditional
/// model.
pub fn rollout_rng(seed: u64, iter: u64, group: u64, member: u64) -> RunRng {
    let group_seed = derive_rng(seed, &[salt::ROLLOUT, iter, group]).gen::<u64>();
    derive_rng(group_seed, &[member])
}

/// Samples `count` clips of `shape` from the denoiser, in parallel, with
/// per-rollout seeds derived from `(seed, iter, group, member)`.
pub fn roll_fakes<D: NoisePredictor + Sync + ?Sized>(
    den: &D,
    sched: &NoiseSchedule,
    sampler: SamplerKind,
    shape: &[usize],
    sample_steps: usize,
    count: usize,
    group_size: usize,
    seed: u64,
    iter: u64,
) -> Result<Vec<Video>> {
    (0..count)
        .into_par_iter()
        .map(|b| {
            let mut rng = rollout_rng(
                seed,
                iter,
                (b / group_size) as u64,
                (b % group_size) as u64,
            );
            Video::new(sampler.sample(den, sched, shape, sample_steps, &mut rng)?)
        })
        .collect()
}

pub(crate) fn reward_combine_for(cfg: &ShiftConfig, reward_cfg: &RewardConfig) -> RewardConfig {
    let mut effective = reward_cfg.clone();
    if !cfg.lmr_enabled {
        effective.combine = CombineMode::ImrOnly;
    }
    effective
}

/// Advantage weights under the configured temperature form. Both forms
/// agree up to rounding; the loss-coefficient route computes unit-scale
/// advantages inside a widened clip window and folds `1 / beta` in after.
fn advantage_weights(
    cfg: &ShiftConfig,
    rewards_fake: &[f64],
    rewards_real: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    match cfg.awr_form {
        AwrForm::ScaledRewards => {
            compute_advantages(rewards_fake, rewards_real, cfg.beta, cfg.adv_clip)
        }
        AwrForm::LossCoefficient => {
            let wide = (cfg.adv_clip.0 * cfg.beta, cfg.adv_clip.1 * cfg.beta);
            let (fake, real) = compute_advantages(rewards_fake, rewards_real, 1.0, wide)?;
            let lambda = cfg.lambda_awr();
            Ok((
                fake.into_iter().map(|a| lambda * a).collect(),
                real.into_iter().map(|a| lambda * a).collect(),
            ))
        }
    }
}

/// Draws reals, rolls out fakes, extracts features, scores everything with
/// the shadow discriminators, and computes advantage weights.
#[allow(clippy::too_many_arguments)]
pub fn fill_buffer<D: NoisePredictor + Sync + ?Sized>(
    den: &D,
    dataset: &Dataset,
    scorer: &ShadowScorer<'_>,
    cfg: &ShiftConfig,
    reward_cfg: &RewardConfig,
    extractor: &FeatureExtractor,
    sched: &NoiseSchedule,
    sampler: SamplerKind,
    sample_steps: usize,
    seed: u64,
    iter: u64,
) -> Result<(RolloutBuffer, BufferFeatures)> {
    if dataset.is_empty() {
        return Err(Error::contract("rollout buffer needs a nonempty dataset"));
    }
    let b = cfg.buffer_size;
    let shape = dataset.clips[0].video.frames().shape().to_vec();

    let mut pick_rng = derive_rng(seed, &[salt::TRAIN, iter, 0]);
    let reals: Vec<Video> = (0..b)
        .map(|_| dataset.clips[pick_rng.gen_range(0..dataset.len())].video.clone())
        .collect();
    let fakes = roll_fakes(
        den,
        sched,
        sampler,
        &shape,
        sample_steps,
        b,
        cfg.rollouts_per_group,
        seed,
        iter,
    )?;
    if fakes
        .iter()
        .any(|v| v.frames().data().iter().any(|x| !x.is_finite()))
    {
        return Err(Error::numerical("generator produced a non-finite rollout"));
    }
    let group_of: Vec<usize> = (0..b).map(|i| i / cfg.rollouts_per_group).collect();

    let extract = |clips: &[Video], side: u64| -> Result<(Vec<Tensor>, Vec<Tensor>)> {
        let pairs: Vec<(Tensor, Tensor)> = clips
            .par_iter()
            .enumerate()
            .map(|(i, clip)| {
                let query_seed = derive_rng(seed, &[salt::QUERIES, iter, side, i as u64])
                    .gen::<u64>();
                Ok((
                    extractor.imr_features(clip)?,
                    extractor.lmr_features(clip, query_seed)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(pairs.into_iter().unzip())
    };
    let (imr_fake, lmr_fake) = extract(&fakes, 1)?;
    let (imr_real, lmr_real) = extract(&reals, 2)?;

    let effective = reward_combine_for(cfg, reward_cfg);
    let score_all = |imr: &[Tensor], lmr: &[Tensor]| -> Result<Vec<f64>> {
        imr.iter()
            .zip(lmr)
            .map(|(i, l)| scorer.score(i, l, &effective))
            .collect()
    };
    let rewards_fake = score_all(&imr_fake, &lmr_fake)?;
    let rewards_real = score_all(&imr_real, &lmr_real)?;
    if rewards_fake
        .iter()
        .chain(&rewards_real)
        .any(|r| !r.is_finite())
    {
        return Err(Error::numerical(
            "reward scoring produced a non-finite value",
        ));
    }

    let (advantages_fake, advantages_real) =
        advantage_weights(cfg, &rewards_fake, &rewards_real)?;
    debug_assert!(
        {
            let scale = 1.0 / (cfg.beta * rewards_fake.len() as f64);
            let center = rewards_fake.iter().sum::<f64>() * scale;
            rewards_fake
                .iter()
                .map(|r| r / cfg.beta - center)
                .sum::<f64>()
                .abs()
                < 1e-12 * rewards_fake.len() as f64
        },
        "fake advantages failed to recenter"
    );

    Ok((
        RolloutBuffer {
            fakes,
            reals,
            rewards_fake,
            rewards_real,
            advantages_fake,
            advantages_real,
            group_of,
            passes_used: 0,
        },
        BufferFeatures {
            imr_fake,
            imr_real,
            lmr_fake,
            lmr_real,
        },
    ))
}
