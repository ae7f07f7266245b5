//! Fine-tuning loops for the toy video diffusion model.
//!
//! The hybrid loop alternates between two coupled updates: discriminators
//! retrain on fresh rollouts while the generator regresses toward
//! advantage-weighted denoising targets, anchored by a supervised term on
//! real clips. Layout:
//!
//! * [`config`] — loop hyperparameters and the two advantage weight forms.
//! * [`advantages`] — group-relative advantage shaping (scale, recenter,
//!   clip).
//! * [`buffer`] — rollout buffers, grouped sampling seeds, and shadow
//!   scoring.
//! * [`steps`] — single optimizer steps for all three loss shapes.
//! * [`loops`] — the outer loops: hybrid, supervised, reward-weighted.
//! * [`log`] — the shared CSV training log.

pub mod advantages;
pub mod buffer;
pub mod config;
pub mod log;
pub mod loops;
pub mod steps;

pub use advantages::compute_advantages;
pub use buffer::{fill_buffer, roll_fakes, rollout_rng, BufferFeatures, RolloutBuffer, ShadowScorer};
pub use config::{AwrForm, ShiftConfig};
pub use log::{LogRow, TrainLog};
pub use loops::{
    held_out_denoising_loss, train_rwr, train_sft, train_shift, CheckpointPlan, LoopOptions,
    RwrOptions, SftOptions, SftReport, ShiftRun,
};
pub use steps::{rwr_step, rwr_weight, sft_step, shift_step, StepReport};
