//! The three training loops: hybrid fine-tuning against shadow-scored
//! rollouts, supervised fine-tuning, and offline reward-weighted regression.

use std::path::PathBuf;

use rand::Rng;

use crate::diffusion::{denoising_mse, ConvDenoiser, SamplerKind, Video};
use crate::error::{Error, Result};
use crate::eval::{appearance_score, motion_magnitude};
use crate::features::FeatureExtractor;
use crate::ndgrad::checkpoint::Checkpoint;
use crate::rewards::{
    ema_update, train_discriminator_step, CombineMode, RewardBundle, RewardConfig,
};
use crate::rng::{derive_rng, salt, RunRng};
use crate::toyworld::Dataset;
use crate::trainer::buffer::{fill_buffer, reward_combine_for, roll_fakes, ShadowScorer};
use crate::trainer::config::ShiftConfig;
use crate::trainer::log::{LogRow, TrainLog};
use crate::trainer::steps::{rwr_step, rwr_weight, sft_step, shift_step};
use crate::{AdamW, AdamWConfig, Graph, NoiseSchedule, ParamStore, Tensor};

/// Write a full training checkpoint every `every` outer iterations. A
/// failing iteration flushes state to the same path with extension `abort`
/// before the error propagates, leaving any periodic checkpoint intact.
#[derive(Debug, Clone)]
pub struct CheckpointPlan {
    pub every: usize,
    pub path: PathBuf,
}

/// Settings shared by every run of the hybrid loop.
#[derive(Debug, Clone)]
pub struct LoopOptions {
    pub iterations: usize,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub sample_steps: usize,
    pub seed: u64,
    pub reward: RewardConfig,
    pub extractor: FeatureExtractor,
    pub checkpoint: Option<CheckpointPlan>,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions {
            iterations: 50,
            gen_lr: 1e-5,
            disc_lr: 1e-4,
            sample_steps: 50,
            seed: 0,
            reward: RewardConfig::default(),
            extractor: FeatureExtractor::default(),
            checkpoint: None,
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn pick_with_replacement(pool: &[Tensor], n: usize, rng: &mut RunRng) -> Vec<Tensor> {
    (0..n).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect()
}

struct ShiftState<'a> {
    den: &'a mut ConvDenoiser,
    bundle: &'a mut RewardBundle,
    imr_shadow: crate::rewards::ImrDiscriminator,
    imr_shadow_store: ParamStore,
    lmr_shadow: crate::rewards::LmrDiscriminator,
    lmr_shadow_store: ParamStore,
    gen_opt: AdamW,
    imr_opt: AdamW,
    lmr_opt: AdamW,
    update_imr: bool,
    update_lmr: bool,
}

impl ShiftState<'_> {
    fn checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        self.den.save_into(&mut ckpt);
        self.bundle.save_into(&mut ckpt);
        ckpt.insert_store("imr_ema", &self.imr_shadow_store);
        ckpt.insert_store("lmr_ema", &self.lmr_shadow_store);
        ckpt
    }

    /// One outer iteration: resample the buffer, score it once with the
    /// shadow discriminators, then run `k_inner` coupled update steps.
    #[allow(clippy::too_many_arguments)]
    fn iteration(
        &mut self,
        dataset: &Dataset,
        cfg: &ShiftConfig,
        opts: &LoopOptions,
        sched: &NoiseSchedule,
        sampler: SamplerKind,
        iter: usize,
        log: &mut TrainLog,
    ) -> Result<()> {
        let scorer = ShadowScorer {
            imr: &self.imr_shadow,
            imr_store: &self.imr_shadow_store,
            lmr: &self.lmr_shadow,
            lmr_store: &self.lmr_shadow_store,
        };
        let (mut buffer, features) = fill_buffer(
            &*self.den,
            dataset,
            &scorer,
            cfg,
            &opts.reward,
            &opts.extractor,
            sched,
            sampler,
            opts.sample_steps,
            opts.seed,
            iter as u64,
        )?;
        let motion = motion_magnitude(&buffer.fakes)?;
        let appearance = appearance_score(&buffer.fakes, &buffer.reals)?;
        let mean_fake = mean(&buffer.rewards_fake);
        let mean_real = mean(&buffer.rewards_real);
        let adv_min = buffer.advantages_fake.iter().copied().fold(f64::INFINITY, f64::min);
        let adv_max = buffer
            .advantages_fake
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);

        let all: Vec<usize> = (0..cfg.buffer_size).collect();
        let mut rng = derive_rng(opts.seed, &[salt::TRAIN, iter as u64, 1]);
        for k in 0..cfg.k_inner {
            let mut disc_losses = Vec::new();
            if self.update_imr || self.update_lmr {
                for _ in 0..cfg.d_to_g_ratio {
                    if self.update_imr {
                        let real = pick_with_replacement(&features.imr_real, cfg.buffer_size, &mut rng);
                        let fake = pick_with_replacement(&features.imr_fake, cfg.buffer_size, &mut rng);
                        disc_losses.push(train_discriminator_step(
                            &self.bundle.imr,
                            &mut self.bundle.imr_store,
                            &real,
                            &fake,
                            &mut self.imr_opt,
                        )?);
                    }
                    if self.update_lmr {
                        let real = pick_with_replacement(&features.lmr_real, cfg.buffer_size, &mut rng);
                        let fake = pick_with_replacement(&features.lmr_fake, cfg.buffer_size, &mut rng);
                        disc_losses.push(train_discriminator_step(
                            &self.bundle.lmr,
                            &mut self.bundle.lmr_store,
                            &real,
                            &fake,
                            &mut self.lmr_opt,
                        )?);
                    }
                    log.discriminator_steps += 1;
                }
                if self.update_imr {
                    ema_update(&mut self.imr_shadow_store, &self.bundle.imr_store, opts.reward.ema_decay)?;
                }
                if self.update_lmr {
                    ema_update(&mut self.lmr_shadow_store, &self.bundle.lmr_store, opts.reward.ema_decay)?;
                }
            }

            let report = shift_step(
                self.den,
                &buffer,
                &all,
                &all,
                sched,
                cfg,
                &mut self.gen_opt,
                &mut rng,
            )?;
            log.generator_steps += 1;
            buffer.passes_used += 1;
            debug_assert!(buffer.passes_used <= cfg.k_inner);

            let row = LogRow {
                iter,
                inner_step: k,
                awr_loss: report.awr_loss,
                sft_loss: report.sft_loss,
                disc_loss: if disc_losses.is_empty() {
                    f64::NAN
                } else {
                    mean(&disc_losses)
                },
                mean_reward_fake: mean_fake,
                mean_reward_real: mean_real,
                adv_min,
                adv_max,
                motion_metric: motion,
                appearance_metric: appearance,
            };
            if !row.is_sane() {
                return Err(Error::numerical(format!(
                    "training log row went non-finite at iteration {iter}, inner step {k}"
                )));
            }
            log.rows.push(row);
        }
        Ok(())
    }
}

/// Resumable hybrid fine-tuning run. Shadow discriminators and all three
/// optimizers live inside, so training can stop for evaluation and pick up
/// where it left off with identical results to an uninterrupted run.
///
/// `LoopOptions::iterations` is ignored here; [`ShiftRun::advance`] decides
/// how far to train.
pub struct ShiftRun<'a> {
    state: ShiftState<'a>,
    dataset: &'a Dataset,
    cfg: ShiftConfig,
    opts: LoopOptions,
    sched: &'a NoiseSchedule,
    sampler: SamplerKind,
    log: TrainLog,
    next_iter: usize,
}

impl<'a> ShiftRun<'a> {
    pub fn new(
        den: &'a mut ConvDenoiser,
        bundle: &'a mut RewardBundle,
        dataset: &'a Dataset,
        cfg: &ShiftConfig,
        opts: &LoopOptions,
        sched: &'a NoiseSchedule,
        sampler: SamplerKind,
    ) -> Result<Self> {
        cfg.validate()?;
        opts.reward.validate()?;
        opts.extractor.validate()?;
        let (imr_shadow_store, imr_shadow) = bundle.imr.shadow(&bundle.imr_store)?;
        let (lmr_shadow_store, lmr_shadow) = bundle.lmr.shadow(&bundle.lmr_store)?;
        let effective = reward_combine_for(cfg, &opts.reward);
        let state = ShiftState {
            den,
            bundle,
            imr_shadow,
            imr_shadow_store,
            lmr_shadow,
            lmr_shadow_store,
            gen_opt: AdamW::new(AdamWConfig::new(opts.gen_lr)),
            imr_opt: AdamW::new(AdamWConfig::new(opts.disc_lr)),
            lmr_opt: AdamW::new(AdamWConfig::new(opts.disc_lr)),
            update_imr: cfg.adv_rm && effective.combine != CombineMode::LmrOnly,
            update_lmr: cfg.adv_rm && effective.combine != CombineMode::ImrOnly,
        };
        Ok(ShiftRun {
            state,
            dataset,
            cfg: cfg.clone(),
            opts: opts.clone(),
            sched,
            sampler,
            log: TrainLog::default(),
            next_iter: 0,
        })
    }

    pub fn denoiser(&self) -> &ConvDenoiser {
        self.state.den
    }

    pub fn iterations_done(&self) -> usize {
        self.next_iter
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn into_log(self) -> TrainLog {
        self.log
    }

    /// Runs `iterations` more outer iterations. A failing iteration flushes
    /// an abort checkpoint (when a plan is set) before propagating.
    pub fn advance(&mut self, iterations: usize) -> Result<()> {
        for _ in 0..iterations {
            let iter = self.next_iter;
            if let Err(e) = self.state.iteration(
                self.dataset,
                &self.cfg,
                &self.opts,
                self.sched,
                self.sampler,
                iter,
                &mut self.log,
            ) {
                if let Some(plan) = &self.opts.checkpoint {
                    self.state.checkpoint().save(&plan.path.with_extension("abort"))?;
                }
                return Err(e);
            }
            self.next_iter += 1;
            if let Some(plan) = &self.opts.checkpoint {
                if plan.every > 0 && self.next_iter % plan.every == 0 {
                    self.state.checkpoint().save(&plan.path)?;
                }
            }
        }
        Ok(())
    }
}

/// Hybrid fine-tuning. Each outer iteration resamples the rollout buffer
/// and scores it once with the EMA shadow discriminators; the advantage
/// weights then stay fixed while `k_inner` inner steps interleave
/// discriminator updates (on fresh with-replacement minibatches), shadow EMA
/// updates, and generator updates on the full buffer. Only discriminators
/// whose logits feed the reward are updated; with `adv_rm` off both live and
/// shadow parameters stay untouched.
pub fn train_shift(
    den: &mut ConvDenoiser,
    bundle: &mut RewardBundle,
    dataset: &Dataset,
    cfg: &ShiftConfig,
    opts: &LoopOptions,
    sched: &NoiseSchedule,
    sampler: SamplerKind,
) -> Result<TrainLog> {
    let mut run = ShiftRun::new(den, bundle, dataset, cfg, opts, sched, sampler)?;
    run.advance(opts.iterations)?;
    Ok(run.into_log())
}

/// Number of fixed `(t, eps)` probes behind each held-out loss evaluation.
const N_VAL_PROBES: usize = 8;

/// Settings for the supervised baseline.
#[derive(Debug, Clone)]
pub struct SftOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub val_fraction: f64,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for SftOptions {
    fn default() -> Self {
        SftOptions {
            steps: 500,
            batch_size: 8,
            lr: 1e-4,
            val_fraction: 0.2,
            eval_every: 25,
            seed: 0,
        }
    }
}

/// Training log plus the held-out loss curve sampled during the run.
#[derive(Debug)]
pub struct SftReport {
    pub log: TrainLog,
    /// `(step, held-out denoising loss)` at each evaluation point.
    pub val_curve: Vec<(usize, f64)>,
}

/// Mean denoising loss of `den` over the indexed clips under a fixed probe
/// set, so successive evaluations are comparable.
pub fn held_out_denoising_loss(
    den: &ConvDenoiser,
    dataset: &Dataset,
    idx: &[usize],
    probes: &[(usize, Tensor)],
    sched: &NoiseSchedule,
) -> Result<f64> {
    if idx.is_empty() || probes.is_empty() {
        return Err(Error::contract("held-out evaluation needs clips and probes"));
    }
    let mut total = 0.0;
    for &i in idx {
        for (t, eps) in probes {
            let mut g = Graph::new();
            let node = denoising_mse(&mut g, den, dataset.clips[i].video.frames(), *t, eps, sched)?;
            total += g.value(node).data()[0];
        }
    }
    Ok(total / (idx.len() * probes.len()) as f64)
}

/// Supervised fine-tuning on the dataset's training split, with the
/// held-out split evaluated every `eval_every` steps and once at the end.
pub fn train_sft(
    den: &mut ConvDenoiser,
    dataset: &Dataset,
    opts: &SftOptions,
    sched: &NoiseSchedule,
) -> Result<SftReport> {
    if opts.batch_size == 0 {
        return Err(Error::config("sft batch_size must be at least 1"));
    }
    let mut log = TrainLog::default();
    let mut val_curve = Vec::new();
    if opts.steps == 0 {
        return Ok(SftReport { log, val_curve });
    }
    let (train_idx, val_idx) = dataset.train_val_split(opts.val_fraction)?;
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::config(format!(
            "val_fraction {} leaves an empty split on {} clips",
            opts.val_fraction,
            dataset.len()
        )));
    }
    let shape = dataset.clips[0].video.frames().shape().to_vec();
    let mut probe_rng = derive_rng(opts.seed, &[salt::TRAIN, 1]);
    let probes: Vec<(usize, Tensor)> = (0..N_VAL_PROBES)
        .map(|_| {
            let t = probe_rng.gen_range(1..=sched.len());
            (t, Tensor::randn(&shape, 1.0, &mut probe_rng))
        })
        .collect();

    let mut rng = derive_rng(opts.seed, &[salt::TRAIN, 0]);
    let mut opt = AdamW::new(AdamWConfig::new(opts.lr));
    let eval_every = opts.eval_every.max(1);
    for step in 0..opts.steps {
        if step % eval_every == 0 {
            val_curve.push((step, held_out_denoising_loss(den, dataset, &val_idx, &probes, sched)?));
        }
        let clips: Vec<&Video> = (0..opts.batch_size)
            .map(|_| &dataset.clips[train_idx[rng.gen_range(0..train_idx.len())]].video)
            .collect();
        let (loss, _) = sft_step(den, &clips, sched, &mut opt, &mut rng)?;
        log.generator_steps += 1;
        let mut row = LogRow::empty(step, 0);
        row.sft_loss = loss;
        log.rows.push(row);
    }
    val_curve.push((
        opts.steps,
        held_out_denoising_loss(den, dataset, &val_idx, &probes, sched)?,
    ));
    Ok(SftReport { log, val_curve })
}

/// Settings for the offline reward-weighted baseline.
#[derive(Debug, Clone)]
pub struct RwrOptions {
    pub steps: usize,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub beta: f64,
    pub lr: f64,
    pub sample_steps: usize,
    pub seed: u64,
}

impl Default for RwrOptions {
    fn default() -> Self {
        RwrOptions {
            steps: 200,
            buffer_size: 32,
            batch_size: 8,
            beta: 1.0,
            lr: 1e-5,
            sample_steps: 50,
            seed: 0,
        }
    }
}

/// Offline reward-weighted regression: rolls a fixed fake buffer once,
/// weights each clip by `exp(r / beta)` (no recentering), and regresses on
/// with-replacement minibatches. Weights that hit the `exp(10)` clamp are
/// counted in a warning instead of aborting the run.
pub fn train_rwr(
    den: &mut ConvDenoiser,
    shape: &[usize],
    mut reward_fn: impl FnMut(&Video) -> Result<f64>,
    opts: &RwrOptions,
    sched: &NoiseSchedule,
    sampler: SamplerKind,
) -> Result<TrainLog> {
    if opts.beta <= 0.0 {
        return Err(Error::config(format!("rwr beta {} must be positive", opts.beta)));
    }
    if opts.buffer_size == 0 || opts.batch_size == 0 || opts.sample_steps == 0 {
        return Err(Error::config(
            "rwr buffer_size, batch_size, and sample_steps must be at least 1",
        ));
    }
    let fakes = roll_fakes(
        &*den,
        sched,
        sampler,
        shape,
        opts.sample_steps,
        opts.buffer_size,
        1,
        opts.seed,
        0,
    )?;
    let rewards: Vec<f64> = fakes.iter().map(&mut reward_fn).collect::<Result<_>>()?;
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::numerical("rwr reward function returned a non-finite value"));
    }
    let mut clamped = 0usize;
    let weights: Vec<f64> = rewards
        .iter()
        .map(|&r| {
            let (w, hit) = rwr_weight(r, opts.beta);
            clamped += hit as usize;
            w
        })
        .collect();

    let mut log = TrainLog::default();
    if clamped > 0 {
        log.warnings.push(format!(
            "{clamped} of {} reward weights hit the exp(10) clamp; consider a larger beta",
            weights.len()
        ));
    }
    let mean_reward = mean(&rewards);
    let mut rng = derive_rng(opts.seed, &[salt::TRAIN, 0]);
    let mut opt = AdamW::new(AdamWConfig::new(opts.lr));
    for step in 0..opts.steps {
        let idx: Vec<usize> = (0..opts.batch_size)
            .map(|_| rng.gen_range(0..fakes.len()))
            .collect();
        let clips: Vec<&Video> = idx.iter().map(|&i| &fakes[i]).collect();
        let picked: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
        let (loss, _) = rwr_step(den, &clips, &picked, sched, &mut opt, &mut rng)?;
        log.generator_steps += 1;
        let mut row = LogRow::empty(step, 0);
        row.awr_loss = loss;
        row.mean_reward_fake = mean_reward;
        log.rows.push(row);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::DenoiserConfig;
    use crate::toyworld::{make_dataset, SceneSpec};

    fn tiny_world() -> (Dataset, NoiseSchedule) {
        let spec = SceneSpec {
            n_objects: 1,
            height: 10,
            width: 10,
            frames: 3,
            radius_range: (1.5, 2.0),
            speed_range: (0.5, 0.8),
            ..SceneSpec::default()
        };
        let dataset = make_dataset(&spec, 5, 17).unwrap();
        let sched = NoiseSchedule::linear(30, 1e-4, 0.02).unwrap();
        (dataset, sched)
    }

    fn fresh_denoiser(sched: &NoiseSchedule) -> ConvDenoiser {
        let mut rng = derive_rng(5, &[]);
        ConvDenoiser::new(
            DenoiserConfig {
                frames: 3,
                hidden_channels: 4,
                conv_layers: 2,
                kernel: 3,
            },
            sched.len(),
            &mut rng,
        )
        .unwrap()
    }

    fn params_of(store: &ParamStore) -> Vec<Vec<f64>> {
        store
            .ids()
            .iter()
            .map(|&id| store.get(id).data().to_vec())
            .collect()
    }

    fn tiny_cfg() -> ShiftConfig {
        ShiftConfig {
            buffer_size: 2,
            rollouts_per_group: 2,
            k_inner: 2,
            ..ShiftConfig::default()
        }
    }

    fn tiny_opts(iterations: usize) -> LoopOptions {
        LoopOptions {
            iterations,
            gen_lr: 1e-4,
            disc_lr: 1e-3,
            sample_steps: 4,
            seed: 11,
            ..LoopOptions::default()
        }
    }

    #[test]
    fn zero_sft_steps_leave_parameters_untouched() {
        let (dataset, sched) = tiny_world();
        let mut den = fresh_denoiser(&sched);
        let before = params_of(den.store());
        let opts = SftOptions {
            steps: 0,
            ..SftOptions::default()
        };
        let report = train_sft(&mut den, &dataset, &opts, &sched).unwrap();
        assert!(report.log.rows.is_empty());
        assert!(report.val_curve.is_empty());
        assert_eq!(params_of(den.store()), before);
    }

    #[test]
    fn sft_reduces_held_out_denoising_loss() {
        let (dataset, sched) = tiny_world();
        let mut den = fresh_denoiser(&sched);
        let opts = SftOptions {
            steps: 500,
            batch_size: 4,
            lr: 1e-3,
            eval_every: 100,
            ..SftOptions::default()
        };
        let report = train_sft(&mut den, &dataset, &opts, &sched).unwrap();
        assert_eq!(report.log.rows.len(), 500);
        let curve: Vec<f64> = report.val_curve.iter().map(|&(_, v)| v).collect();
        // Average the ends of the curve so one noisy evaluation cannot flip
        // the verdict.
        let head = (curve[0] + curve[1]) / 2.0;
        let n = curve.len();
        let tail = (curve[n - 2] + curve[n - 1]) / 2.0;
        assert!(
            tail < 0.95 * head,
            "held-out loss failed to drop: head {head}, tail {tail}, curve {curve:?}"
        );
    }

    #[test]
    fn shift_logs_every_inner_step_and_resamples_each_iteration() {
        let (dataset, sched) = tiny_world();
        let mut den = fresh_denoiser(&sched);
        let mut bundle = RewardBundle::new(3, 23).unwrap();
        let disc_before = params_of(&bundle.imr_store);
        let cfg = tiny_cfg();
        let log = train_shift(
            &mut den,
            &mut bundle,
            &dataset,
            &cfg,
            &tiny_opts(2),
            &sched,
            SamplerKind::Ancestral,
        )
        .unwrap();

        assert_eq!(log.rows.len(), 4);
        assert_eq!(log.generator_steps, 4);
        assert_eq!(log.discriminator_steps, 4);
        let pattern: Vec<(usize, usize)> = log.rows.iter().map(|r| (r.iter, r.inner_step)).collect();
        assert_eq!(pattern, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        for row in &log.rows {
            assert!(row.disc_loss.is_finite());
            assert!(row.awr_loss.is_finite());
            assert!(row.sft_loss.is_finite());
            assert!(row.motion_metric.is_finite());
            assert!(row.appearance_metric.is_finite());
        }
        assert_ne!(
            log.rows[0].mean_reward_fake, log.rows[2].mean_reward_fake,
            "buffer was not resampled between iterations"
        );
        assert_ne!(params_of(&bundle.imr_store), disc_before);
    }

    #[test]
    fn k_inner_sets_the_exact_step_counts_per_buffer() {
        let (dataset, sched) = tiny_world();
        let mut den = fresh_denoiser(&sched);
        let mut bundle = RewardBundle::new(3, 29).unwrap();
        let cfg = ShiftConfig {
            k_inner: 10,
            ..tiny_cfg()
        };
        let log = train_shift(
            &mut den,
            &mut bundle,
            &dataset,
            &cfg,
            &tiny_opts(1),
            &sched,
            SamplerKind::Ancestral,
        )
        .unwrap();
        assert_eq!(log.generator_steps, 10);
        assert_eq!(log.discriminator_steps, 10);
        assert_eq!(log.rows.len(), 10);
    }

    #[test]
    fn disabling_the_adversarial_reward_freezes_discriminators() {
        let (dataset, sched) = tiny_world();
        let mut den = fresh_denoiser(&sched);
        let mut bundle = RewardBundle::new(3, 31).unwrap();
        let imr_before = params_of(&bundle.imr_store);
        let lmr_before = params_of(&bundle.lmr_store);
        let cfg = ShiftConfig {
            adv_rm: false,
            ..tiny_cfg()
        };
        let log = train_shift(
            &mut den,
            &mut bundle,
            &dataset,
            &cfg,
            &tiny_opts(2),
            &sched,
            SamplerKind::Ancestral,
        )
        .unwrap();
        assert_eq!(params_of(&bundle.imr_store), imr_before);
        assert_eq!(params_of(&bundle.lmr_store), lmr_before);
        assert_eq!(log.discriminator_steps, 0);
        assert!(log.rows.iter().all(|r| r.disc_loss.is_nan()));
        assert_eq!(log.generator_steps, 4);
    }

    #[test]
    fn both_samplers_complete_ten_iterations() {
        let (dataset, sched) = tiny_world();
        for sampler in [SamplerKind::Ancestral, SamplerKind::Ddim] {
            let mut den = fresh_denoiser(&sched);
            let mut bundle = RewardBundle::new(3, 37).unwrap();
            let cfg = ShiftConfig {
                k_inner: 1,
                ..tiny_cfg()
            };
            let log = train_shift(
                &mut den,
                &mut bundle,
                &dataset,
                &cfg,
                &tiny_opts(10),
                &sched,
                sampler,
            )
            .unwrap();
            assert_eq!(log.rows.len(), 10, "{sampler:?}");
            assert!(log.rows.iter().all(|r| r.is_sane()), "{sampler:?}");
        }
    }

    #[test]
    fn interrupted_runs_match_continuous_runs_bitwise() {
        let (dataset, sched) = tiny_world();
        let cfg = tiny_cfg();
        let opts = tiny_opts(2);

        let mut den_a = fresh_denoiser(&sched);
        let mut bundle_a = RewardBundle::new(3, 47).unwrap();
        let log_a = train_shift(
            &mut den_a,
            &mut bundle_a,
            &dataset,
            &cfg,
            &opts,
            &sched,
            SamplerKind::Ancestral,
        )
        .unwrap();

        let mut den_b = fresh_denoiser(&sched);
        let mut bundle_b = RewardBundle::new(3, 47).unwrap();
        let mut run = ShiftRun::new(
            &mut den_b,
            &mut bundle_b,
            &dataset,
            &cfg,
            &opts,
            &sched,
            SamplerKind::Ancestral,
        )
        .unwrap();
        run.advance(1).unwrap();
        assert_eq!(run.iterations_done(), 1);
        run.advance(1).unwrap();
        let log_b = run.into_log();

        assert_eq!(params_of(den_a.store()), params_of(den_b.store()));
        assert_eq!(log_a.rows.len(), log_b.rows.len());
        for (a, b) in log_a.rows.iter().zip(&log_b.rows) {
            assert_eq!(a.awr_loss, b.awr_loss);
            assert_eq!(a.sft_loss, b.sft_loss);
            assert_eq!(a.mean_reward_fake, b.mean_reward_fake);
        }
    }

    #[test]
    fn poisoned_parameters_abort_and_flush_a_checkpoint() {
        let (dataset, sched) = tiny_world();
        let mut den = fresh_denoiser(&sched);
        for id in den.store().ids() {
            for v in den.store_mut().get_mut(id).data_mut() {
                *v = f64::NAN;
            }
        }
        let mut bundle = RewardBundle::new(3, 41).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        let opts = LoopOptions {
            checkpoint: Some(CheckpointPlan {
                every: 100,
                path: path.clone(),
            }),
            ..tiny_opts(2)
        };
        let err = train_shift(
            &mut den,
            &mut bundle,
            &dataset,
            &tiny_cfg(),
            &opts,
            &sched,
            SamplerKind::Ancestral,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err:?}");
        assert!(path.with_extension("abort").exists());
        assert!(!path.exists(), "no periodic checkpoint should have fired");
    }

    #[test]
    fn periodic_checkpoints_capture_all_four_models() {
        let (dataset, sched) = tiny_world();
        let mut den = fresh_denoiser(&sched);
        let mut bundle = RewardBundle::new(3, 43).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        let cfg = ShiftConfig {
            k_inner: 1,
            ..tiny_cfg()
        };
        let opts = LoopOptions {
            checkpoint: Some(CheckpointPlan {
                every: 1,
                path: path.clone(),
            }),
            ..tiny_opts(1)
        };
        train_shift(
            &mut den,
            &mut bundle,
            &dataset,
            &cfg,
            &opts,
            &sched,
            SamplerKind::Ancestral,
        )
        .unwrap();
        let ckpt = Checkpoint::load(&path).unwrap();
        assert!(ConvDenoiser::load_from(&ckpt).is_ok());
        assert!(RewardBundle::load_from(&ckpt).is_ok());
        assert!(ckpt.extract_store("imr_ema").is_ok());
        assert!(ckpt.extract_store("lmr_ema").is_ok());
    }

    #[test]
    fn rwr_keeps_its_buffer_fixed_and_warns_on_clamped_weights() {
        let (_, sched) = tiny_world();
        let mut den = fresh_denoiser(&sched);
        let opts = RwrOptions {
            steps: 3,
            buffer_size: 4,
            batch_size: 2,
            beta: 100.0,
            lr: 1e-4,
            sample_steps: 4,
            seed: 7,
        };
        let mut scored: Vec<u64> = Vec::new();
        let log = train_rwr(
            &mut den,
            &[3, 10, 10],
            |clip| {
                scored.push(crate::rng::hash_f64_slice(clip.frames().data()));
                Ok(2000.0)
            },
            &opts,
            &sched,
            SamplerKind::Ddim,
        )
        .unwrap();
        assert_eq!(scored.len(), 4, "every buffer clip scored exactly once");
        assert_eq!(log.rows.len(), 3);
        assert_eq!(log.generator_steps, 3);
        assert_eq!(log.warnings.len(), 1);
        assert!(log.warnings[0].contains("4 of 4"));
        assert!(log.rows.iter().all(|r| r.awr_loss.is_finite()));

        let mut den2 = fresh_denoiser(&sched);
        let calm = train_rwr(
            &mut den2,
            &[3, 10, 10],
            |_| Ok(1.0),
            &opts,
            &sched,
            SamplerKind::Ddim,
        )
        .unwrap();
        assert!(calm.warnings.is_empty());
    }
}
