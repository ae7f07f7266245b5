//! Settings of the hybrid fine-tuning loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the `1 / beta` temperature scaling enters the update. Both routes
/// produce the same weights up to rounding; keeping them separate lets tests
/// assert that.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AwrForm {
    /// Rewards are divided by `beta` before recentering and clipping.
    #[default]
    ScaledRewards,
    /// Advantages are computed at unit temperature with a widened clip
    /// range, and the loss multiplies them by `lambda_awr = 1 / beta`.
    LossCoefficient,
}

/// Hyperparameters of the hybrid update and its rollout buffer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftConfig {
    /// Advantage temperature; the reward weight is `1 / beta`.
    pub beta: f64,
    /// Weight of the real-data denoising anchor.
    pub lambda_sft: f64,
    pub adv_clip: (f64, f64),
    /// Share one `(t, eps)` draw between the fake and real branches of each
    /// generator step.
    pub noise_align: bool,
    /// Co-train the discriminators on buffer samples; when off they stay
    /// frozen at their pretrained weights.
    pub adv_rm: bool,
    /// Include the track discriminator's logit in the reward.
    pub lmr_enabled: bool,
    /// Inner passes per rollout buffer.
    pub k_inner: usize,
    /// Rollout buffer size (fakes and reals each).
    pub buffer_size: usize,
    /// Rollouts sharing one noise-group seed.
    pub rollouts_per_group: usize,
    /// Discriminator steps per generator step.
    pub d_to_g_ratio: usize,
    pub awr_form: AwrForm,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig {
            beta: 100.0,
            lambda_sft: 1.0,
            adv_clip: (-10.0, 10.0),
            noise_align: true,
            adv_rm: true,
            lmr_enabled: true,
            k_inner: 10,
            buffer_size: 8,
            rollouts_per_group: 8,
            d_to_g_ratio: 1,
            awr_form: AwrForm::ScaledRewards,
        }
    }
}

impl ShiftConfig {
    /// The reward weight implied by the temperature.
    pub fn lambda_awr(&self) -> f64 {
        1.0 / self.beta
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::config(format!(
                "beta {} must be positive",
                self.beta
            )));
        }
        if self.lambda_sft < 0.0 {
            return Err(Error::config(format!(
                "lambda_sft {} must be nonnegative",
                self.lambda_sft
            )));
        }
        if !(self.adv_clip.0 < self.adv_clip.1) {
            return Err(Error::config(format!(
                "advantage clip range ({}, {}) is empty",
                self.adv_clip.0, self.adv_clip.1
            )));
        }
        if self.k_inner == 0 || self.buffer_size == 0 || self.d_to_g_ratio == 0 {
            return Err(Error::config(
                "k_inner, buffer_size, and d_to_g_ratio must all be at least 1",
            ));
        }
        if self.rollouts_per_group == 0 || self.buffer_size % self.rollouts_per_group != 0 {
            return Err(Error::config(format!(
                "rollouts_per_group {} must divide buffer_size {}",
                self.rollouts_per_group, self.buffer_size
            )));
        }
        Ok(())
    }
}
