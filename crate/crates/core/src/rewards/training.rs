//! Discriminator training: balanced BCE steps, shadow EMA updates, and the
//! pretraining loop that fits both reward models against sampled negatives.

use rayon::prelude::*;

use crate::diffusion::Video;
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::ndgrad::checkpoint::Checkpoint;
use crate::rewards::discriminators::{Discriminator, ImrDiscriminator, LmrDiscriminator};
use crate::rng::{derive_rng, salt};
use crate::toyworld::Dataset;
use crate::{AdamW, AdamWConfig, ParamStore, Tensor};

use rand::Rng;

/// One balanced binary cross-entropy step: real features labeled 1, fake
/// features labeled 0. Returns the batch loss before the update.
pub fn train_discriminator_step<D: Discriminator>(
    disc: &D,
    store: &mut ParamStore,
    real: &[Tensor],
    fake: &[Tensor],
    opt: &mut AdamW,
) -> Result<f64> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::contract(
            "discriminator step needs nonempty real and fake batches",
        ));
    }
    let mut g = crate::Graph::new();
    let mut logits = Vec::with_capacity(real.len() + fake.len());
    let mut labels = Vec::with_capacity(real.len() + fake.len());
    for features in real {
        logits.push(disc.logit_node(&mut g, store, features)?);
        labels.push(1.0);
    }
    for features in fake {
        logits.push(disc.logit_node(&mut g, store, features)?);
        labels.push(0.0);
    }
    let stacked = g.concat(&logits)?;
    let targets = g.leaf(Tensor::from_vec(&[labels.len()], labels)?);
    let loss = g.bce_with_logits(stacked, targets)?;
    let value = g.value(loss).data()[0];
    let grads = g.backward(loss)?;
    opt.step(store, &grads)?;
    Ok(value)
}

/// Moves the shadow parameters toward the live ones:
/// `shadow <- decay * shadow + (1 - decay) * live`.
pub fn ema_update(shadow: &mut ParamStore, live: &ParamStore, decay: f64) -> Result<()> {
    shadow.ema_update_from(live, decay)
}

/// Both reward models with their parameter stores.
pub struct RewardBundle {
    pub imr: ImrDiscriminator,
    pub imr_store: ParamStore,
    pub lmr: LmrDiscriminator,
    pub lmr_store: ParamStore,
}

impl RewardBundle {
    /// Fresh random discriminators sized for `frames`-frame clips.
    pub fn new(frames: usize, seed: u64) -> Result<Self> {
        let mut rng = derive_rng(seed, &[0x4d0de15]);
        let mut imr_store = ParamStore::new();
        let imr = ImrDiscriminator::new(&mut imr_store, frames - 1, &mut rng)?;
        let mut lmr_store = ParamStore::new();
        let lmr = LmrDiscriminator::new(&mut lmr_store, frames, &mut rng)?;
        Ok(RewardBundle {
            imr,
            imr_store,
            lmr,
            lmr_store,
        })
    }

    pub fn save_into(&self, ckpt: &mut Checkpoint) {
        ckpt.insert_store("imr", &self.imr_store);
        ckpt.insert_store("lmr", &self.lmr_store);
    }

    pub fn load_from(ckpt: &Checkpoint) -> Result<Self> {
        let imr_store = ckpt.extract_store("imr")?;
        let lmr_store = ckpt.extract_store("lmr")?;
        let imr = ImrDiscriminator::from_store(&imr_store)?;
        let lmr = LmrDiscriminator::from_store(&lmr_store)?;
        Ok(RewardBundle {
            imr,
            imr_store,
            lmr,
            lmr_store,
        })
    }
}

/// Budget and data-mixing settings for reward pretraining.
#[derive(Debug, Clone)]
pub struct PretrainOptions {
    /// Negatives generated per real clip.
    pub n_fakes_per_real: usize,
    /// Optimizer step budget per discriminator.
    pub steps: usize,
    /// Real (and fake) samples per step; batches are balanced.
    pub batch_size: usize,
    pub lr: f64,
    pub val_fraction: f64,
    /// Accuracy check period; training stops early once both models pass
    /// `target_accuracy`.
    pub eval_every: usize,
    pub target_accuracy: f64,
    pub seed: u64,
    pub extractor: FeatureExtractor,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            n_fakes_per_real: 4,
            steps: 2000,
            batch_size: 8,
            lr: 1e-3,
            val_fraction: 0.2,
            eval_every: 50,
            target_accuracy: 0.95,
            seed: 0,
            extractor: FeatureExtractor::default(),
        }
    }
}

/// Held-out quality of the pretrained discriminators. Accuracies average the
/// per-class hit rates, so fake oversampling cannot hide a degenerate model.
#[derive(Debug, Clone)]
pub struct PretrainReport {
    pub imr_accuracy: f64,
    pub lmr_accuracy: f64,
    pub imr_loss: f64,
    pub lmr_loss: f64,
    pub steps_run: usize,
    pub warning: Option<String>,
}

struct FeaturePair {
    imr: Tensor,
    lmr: Tensor,
}

fn extract_pairs(
    clips: &[Video],
    extractor: &FeatureExtractor,
    seed: u64,
    tag: u64,
) -> Result<Vec<FeaturePair>> {
    clips
        .par_iter()
        .enumerate()
        .map(|(i, clip)| {
            let query_seed = seed
                .wrapping_add(tag.wrapping_mul(0x9e3779b97f4a7c15))
                .wrapping_add((i as u64).wrapping_mul(0xd1b54a32d192ed03));
            Ok(FeaturePair {
                imr: extractor.imr_features(clip)?,
                lmr: extractor.lmr_features(clip, query_seed)?,
            })
        })
        .collect()
}

fn balanced_accuracy<D: Discriminator>(
    disc: &D,
    store: &ParamStore,
    real: &[&Tensor],
    fake: &[&Tensor],
) -> Result<f64> {
    let hit_rate = |side: &[&Tensor], positive: bool| -> Result<f64> {
        let mut hits = 0usize;
        for features in side {
            let logit = disc.score(store, features)?;
            if (logit > 0.0) == positive {
                hits += 1;
            }
        }
        Ok(hits as f64 / side.len().max(1) as f64)
    };
    Ok(0.5 * (hit_rate(real, true)? + hit_rate(fake, false)?))
}

/// Trains both discriminators to separate the dataset's clips from negatives
/// drawn from `fake_source`, reporting held-out balanced accuracy. Accuracy
/// below 0.6 after the budget is surfaced as a warning rather than an error.
pub fn pretrain_rewards(
    reals: &Dataset,
    mut fake_source: impl FnMut(usize) -> Result<Video>,
    opts: &PretrainOptions,
) -> Result<(RewardBundle, PretrainReport)> {
    if reals.is_empty() {
        return Err(Error::contract("reward pretraining needs a nonempty dataset"));
    }
    if opts.n_fakes_per_real == 0 || opts.batch_size == 0 || opts.eval_every == 0 {
        return Err(Error::config(
            "n_fakes_per_real, batch_size, and eval_every must all be at least 1",
        ));
    }
    opts.extractor.validate()?;
    let frames = reals.clips[0].video.t();

    let fakes: Vec<Video> = (0..reals.len() * opts.n_fakes_per_real)
        .map(&mut fake_source)
        .collect::<Result<_>>()?;
    for fake in &fakes {
        if fake.t() != frames {
            return Err(Error::contract(format!(
                "fake clips must match the real frame count {frames}, got {}",
                fake.t()
            )));
        }
    }

    let real_clips: Vec<Video> = reals.clips.iter().map(|c| c.video.clone()).collect();
    let real_feats = extract_pairs(&real_clips, &opts.extractor, opts.seed, 1)?;
    let fake_feats = extract_pairs(&fakes, &opts.extractor, opts.seed, 2)?;

    let (train_real, val_real) = reals.train_val_split(opts.val_fraction)?;
    let fake_of_real =
        |r: usize| (r * opts.n_fakes_per_real)..((r + 1) * opts.n_fakes_per_real);
    let train_fake: Vec<usize> = train_real.iter().flat_map(|&r| fake_of_real(r)).collect();
    let val_fake: Vec<usize> = val_real.iter().flat_map(|&r| fake_of_real(r)).collect();
    if train_real.is_empty() || train_fake.is_empty() {
        return Err(Error::contract(
            "reward pretraining needs at least one training clip per class",
        ));
    }

    let mut bundle = RewardBundle::new(frames, opts.seed)?;
    let mut imr_opt = AdamW::new(AdamWConfig::new(opts.lr));
    let mut lmr_opt = AdamW::new(AdamWConfig::new(opts.lr));
    let mut rng = derive_rng(opts.seed, &[salt::DATASET, 0x42a1a]);

    let val_imr_real: Vec<&Tensor> = val_real.iter().map(|&i| &real_feats[i].imr).collect();
    let val_imr_fake: Vec<&Tensor> = val_fake.iter().map(|&i| &fake_feats[i].imr).collect();
    let val_lmr_real: Vec<&Tensor> = val_real.iter().map(|&i| &real_feats[i].lmr).collect();
    let val_lmr_fake: Vec<&Tensor> = val_fake.iter().map(|&i| &fake_feats[i].lmr).collect();
    let have_val = !val_real.is_empty() && !val_fake.is_empty();

    let mut report = PretrainReport {
        imr_accuracy: 0.5,
        lmr_accuracy: 0.5,
        imr_loss: f64::NAN,
        lmr_loss: f64::NAN,
        steps_run: 0,
        warning: None,
    };
    for step in 1..=opts.steps {
        let pick = |pool: &[usize], rng: &mut crate::rng::RunRng| -> Vec<usize> {
            (0..opts.batch_size)
                .map(|_| pool[rng.gen_range(0..pool.len())])
                .collect()
        };
        let real_idx = pick(&train_real, &mut rng);
        let fake_idx = pick(&train_fake, &mut rng);
        let real_imr: Vec<Tensor> = real_idx.iter().map(|&i| real_feats[i].imr.clone()).collect();
        let fake_imr: Vec<Tensor> = fake_idx.iter().map(|&i| fake_feats[i].imr.clone()).collect();
        let real_lmr: Vec<Tensor> = real_idx.iter().map(|&i| real_feats[i].lmr.clone()).collect();
        let fake_lmr: Vec<Tensor> = fake_idx.iter().map(|&i| fake_feats[i].lmr.clone()).collect();
        report.imr_loss = train_discriminator_step(
            &bundle.imr,
            &mut bundle.imr_store,
            &real_imr,
            &fake_imr,
            &mut imr_opt,
        )?;
        report.lmr_loss = train_discriminator_step(
            &bundle.lmr,
            &mut bundle.lmr_store,
            &real_lmr,
            &fake_lmr,
            &mut lmr_opt,
        )?;
        report.steps_run = step;

        if have_val && step % opts.eval_every == 0 {
            report.imr_accuracy =
                balanced_accuracy(&bundle.imr, &bundle.imr_store, &val_imr_real, &val_imr_fake)?;
            report.lmr_accuracy =
                balanced_accuracy(&bundle.lmr, &bundle.lmr_store, &val_lmr_real, &val_lmr_fake)?;
            if report.imr_accuracy >= opts.target_accuracy
                && report.lmr_accuracy >= opts.target_accuracy
            {
                break;
            }
        }
    }
    if have_val {
        report.imr_accuracy =
            balanced_accuracy(&bundle.imr, &bundle.imr_store, &val_imr_real, &val_imr_fake)?;
        report.lmr_accuracy =
            balanced_accuracy(&bundle.lmr, &bundle.lmr_store, &val_lmr_real, &val_lmr_fake)?;
    }
    if report.imr_accuracy < 0.6 || report.lmr_accuracy < 0.6 {
        report.warning = Some(format!(
            "reward models did not separate real from fake (imr {:.3}, lmr {:.3}); \
             the classes may not be distinguishable under the current features",
            report.imr_accuracy, report.lmr_accuracy
        ));
    }
    Ok((bundle, report))
}
