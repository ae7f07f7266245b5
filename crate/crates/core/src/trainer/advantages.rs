//! Group-relative advantages: rewards scaled by temperature, recentered by
//! the fake-group mean, and clipped. There is deliberately no division by
//! the group standard deviation, so harder groups keep larger advantages.

use crate::error::{Error, Result};

/// Scales both reward arrays by `1 / beta`, recenters both by the mean of
/// the scaled fake rewards, and clips elementwise to `clip`. Returns the
/// fake and real advantage arrays in that order. The real advantages are
/// diagnostics; the fine-tuning loss consumes only the fake ones.
pub fn compute_advantages(
    r_fake: &[f64],
    r_real: &[f64],
    beta: f64,
    clip: (f64, f64),
) -> Result<(Vec<f64>, Vec<f64>)> {
    if r_fake.is_empty() || r_fake.len() != r_real.len() {
        return Err(Error::contract(format!(
            "advantage groups must be nonempty and aligned, got {} fake and {} real rewards",
            r_fake.len(),
            r_real.len()
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::config(format!("temperature {beta} must be positive")));
    }
    if !(clip.0 < clip.1) {
        return Err(Error::config(format!(
            "advantage clip range ({}, {}) is empty",
            clip.0, clip.1
        )));
    }
    let center =
        r_fake.iter().map(|r| r / beta).sum::<f64>() / r_fake.len() as f64;
    let shape = |r: f64| (r / beta - center).clamp(clip.0, clip.1);
    Ok((
        r_fake.iter().map(|&r| shape(r)).collect(),
        r_real.iter().map(|&r| shape(r)).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::sigmoid;
    use proptest::prelude::*;

    const NO_CLIP: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

    #[test]
    fn equal_fake_rewards_zero_out() {
        let (fake, _) = compute_advantages(&[3.0; 5], &[1.0; 5], 7.0, (-10.0, 10.0)).unwrap();
        assert_eq!(fake, vec![0.0; 5]);
    }

    #[test]
    fn two_point_group_centers_and_carries_the_real_offset() {
        let (fake, real) =
            compute_advantages(&[2.0, 4.0], &[6.0, 6.0], 1.0, (-10.0, 10.0)).unwrap();
        assert_eq!(fake, vec![-1.0, 1.0]);
        assert_eq!(real, vec![3.0, 3.0]);
    }

    #[test]
    fn wide_spread_saturates_both_clip_ends() {
        let (fake, _) =
            compute_advantages(&[0.0, 2000.0], &[0.0, 0.0], 100.0, (-10.0, 10.0)).unwrap();
        assert_eq!(fake, vec![-10.0, 10.0]);
    }

    #[test]
    fn empty_group_is_a_contract_error() {
        assert!(matches!(
            compute_advantages(&[], &[], 1.0, (-10.0, 10.0)),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            compute_advantages(&[1.0], &[1.0, 2.0], 1.0, (-10.0, 10.0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn bad_temperature_and_clip_are_config_errors() {
        assert!(matches!(
            compute_advantages(&[1.0], &[1.0], 0.0, (-10.0, 10.0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            compute_advantages(&[1.0], &[1.0], 1.0, (10.0, -10.0)),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn unclipped_fake_advantages_recenter_to_zero(
            rewards in prop::collection::vec(-10.0..10.0f64, 1..64),
            beta in 0.5..200.0f64,
        ) {
            let reals = vec![0.0; rewards.len()];
            let (fake, _) = compute_advantages(&rewards, &reals, beta, NO_CLIP).unwrap();
            let mean = fake.iter().sum::<f64>() / fake.len() as f64;
            prop_assert!(mean.abs() < 1e-12, "residual mean {mean}");
        }

        #[test]
        fn power_of_two_reward_scaling_scales_advantages_exactly(
            rewards in prop::collection::vec(-10.0..10.0f64, 1..32),
            beta in 0.5..200.0f64,
            shift in -2..3i32,
        ) {
            let c = (2.0f64).powi(shift);
            let scaled: Vec<f64> = rewards.iter().map(|r| c * r).collect();
            let reals = vec![0.0; rewards.len()];
            let (base, _) = compute_advantages(&rewards, &reals, beta, NO_CLIP).unwrap();
            let (grown, _) = compute_advantages(&scaled, &reals, beta, NO_CLIP).unwrap();
            for (b, g) in base.iter().zip(&grown) {
                prop_assert_eq!(c * b, *g);
            }
        }

        #[test]
        fn temperature_moves_between_reward_and_advantage_scale(
            rewards in prop::collection::vec(-10.0..10.0f64, 2..32),
            beta in 0.5..200.0f64,
        ) {
            let reals = vec![0.0; rewards.len()];
            let (hot, _) = compute_advantages(&rewards, &reals, beta, NO_CLIP).unwrap();
            let (unit, _) = compute_advantages(&rewards, &reals, 1.0, NO_CLIP).unwrap();
            for (h, u) in hot.iter().zip(&unit) {
                prop_assert!((h - u / beta).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }

        #[test]
        fn confident_logits_collapse_sigmoid_advantages_but_not_logit_ones(
            magnitudes in prop::collection::vec(5.0..30.0f64, 4..32),
            positive in any::<bool>(),
        ) {
            let logits: Vec<f64> = magnitudes
                .iter()
                .map(|&m| if positive { m } else { -m })
                .collect();
            let reals = vec![0.0; logits.len()];

            let squashed: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
            let (sig_adv, _) = compute_advantages(&squashed, &reals, 1.0, NO_CLIP).unwrap();
            let sig_var =
                sig_adv.iter().map(|a| a * a).sum::<f64>() / sig_adv.len() as f64;
            prop_assert!(sig_var < 1e-3, "sigmoid advantage variance {sig_var}");

            let (logit_adv, _) = compute_advantages(&logits, &reals, 1.0, NO_CLIP).unwrap();
            let logit_var =
                logit_adv.iter().map(|a| a * a).sum::<f64>() / logit_adv.len() as f64;
            let mean = logits.iter().sum::<f64>() / logits.len() as f64;
            let raw_var = logits.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>()
                / logits.len() as f64;
            prop_assert!(logit_var >= raw_var - 1e-9, "{logit_var} < {raw_var}");
        }
    }
}
