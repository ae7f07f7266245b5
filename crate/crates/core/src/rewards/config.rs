//! Reward shaping settings: how discriminator logits become scalar rewards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a raw logit turns into a reward value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Clamp the logit to `[r_min, r_max]`.
    Logit,
    /// Squash the logit through a sigmoid; saturates for confident
    /// discriminators and compresses group-relative advantages.
    Sigmoid,
}

/// Which discriminators contribute to the combined reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    ImrOnly,
    LmrOnly,
    /// Each reward is shaped independently, then summed.
    Sum,
}

/// Reward shaping configuration shared by training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub mode: RewardMode,
    /// Decay of the shadow discriminators that score rollouts.
    pub ema_decay: f64,
    pub combine: CombineMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            r_min: -10.0,
            r_max: 10.0,
            mode: RewardMode::Logit,
            ema_decay: 0.99,
            combine: CombineMode::Sum,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_min >= self.r_max {
            return Err(Error::config(format!(
                "reward bounds must satisfy r_min < r_max, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return Err(Error::config(format!(
                "ema_decay {} must lie strictly inside (0, 1)",
                self.ema_decay
            )));
        }
        Ok(())
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Shapes one logit into a reward according to the configured mode.
pub fn reward(logit: f64, cfg: &RewardConfig) -> f64 {
    match cfg.mode {
        RewardMode::Logit => logit.clamp(cfg.r_min, cfg.r_max),
        RewardMode::Sigmoid => sigmoid(logit),
    }
}

/// Combines the two discriminator logits into the scalar reward used for
/// advantages. Each logit is shaped independently before combination.
pub fn combined_reward(imr_logit: f64, lmr_logit: f64, cfg: &RewardConfig) -> f64 {
    match cfg.combine {
        CombineMode::ImrOnly => reward(imr_logit, cfg),
        CombineMode::LmrOnly => reward(lmr_logit, cfg),
        CombineMode::Sum => reward(imr_logit, cfg) + reward(lmr_logit, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logit_mode_passes_through_inside_the_bounds() {
        let cfg = RewardConfig::default();
        assert_eq!(reward(0.0, &cfg), 0.0);
        assert_eq!(reward(3.25, &cfg), 3.25);
        assert_eq!(reward(-9.99, &cfg), -9.99);
    }

    #[test]
    fn logit_mode_clamps_at_both_bounds() {
        let cfg = RewardConfig::default();
        assert_eq!(reward(25.0, &cfg), 10.0);
        assert_eq!(reward(-25.0, &cfg), -10.0);
    }

    #[test]
    fn sigmoid_mode_saturates_for_large_logits() {
        let cfg = RewardConfig {
            mode: RewardMode::Sigmoid,
            ..RewardConfig::default()
        };
        let r = reward(10.0, &cfg);
        assert!((r - 0.9999546021312976).abs() < 1e-12, "sigmoid(10) = {r}");
        assert!(reward(-10.0, &cfg) < 1e-4);
        assert_eq!(reward(0.0, &cfg), 0.5);
    }

    #[test]
    fn sigmoid_is_stable_at_extreme_logits() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!(sigmoid(-800.0) >= 0.0);
    }

    #[test]
    fn combine_modes_select_and_sum_clipped_terms() {
        let cfg = RewardConfig::default();
        assert_eq!(combined_reward(3.0, 100.0, &cfg), 13.0);
        let imr_only = RewardConfig {
            combine: CombineMode::ImrOnly,
            ..cfg
        };
        assert_eq!(combined_reward(3.0, 100.0, &imr_only), 3.0);
        let lmr_only = RewardConfig {
            combine: CombineMode::LmrOnly,
            ..cfg
        };
        assert_eq!(combined_reward(3.0, 100.0, &lmr_only), 10.0);
    }

    #[test]
    fn invalid_bounds_and_decay_are_rejected() {
        let flipped = RewardConfig {
            r_min: 10.0,
            r_max: -10.0,
            ..RewardConfig::default()
        };
        assert!(matches!(flipped.validate(), Err(Error::Config(_))));
        for decay in [0.0, 1.0, -0.5, 1.5] {
            let cfg = RewardConfig {
                ema_decay: decay,
                ..RewardConfig::default()
            };
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = RewardConfig {
            mode: RewardMode::Sigmoid,
            combine: CombineMode::LmrOnly,
            ..RewardConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: RewardConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
