//! Reward-hacking diagnostic: motion gains that outrun appearance.

use crate::error::{Error, Result};

fn z_scores(series: &[f64]) -> Vec<f64> {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return vec![0.0; series.len()];
    }
    let std = var.sqrt();
    series.iter().map(|v| (v - mean) / std).collect()
}

/// Per-epoch gap between the motion and appearance trajectories of one run,
/// each standardized to z-scores over the run (population std). A constant
/// series standardizes to all zeros. Large positive gaps flag epochs where
/// motion grew while appearance fell behind.
pub fn motion_appearance_gap(motion: &[f64], appearance: &[f64]) -> Result<Vec<f64>> {
    if motion.len() != appearance.len() {
        return Err(Error::contract(format!(
            "gap needs aligned series, got {} motion and {} appearance epochs",
            motion.len(),
            appearance.len()
        )));
    }
    if motion.len() < 2 {
        return Err(Error::contract("gap needs at least two epochs"));
    }
    Ok(z_scores(motion)
        .into_iter()
        .zip(z_scores(appearance))
        .map(|(m, a)| m - a)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matched_trajectories_cancel() {
        let series = [0.1, 0.4, 0.9, 1.3];
        let gap = motion_appearance_gap(&series, &series).unwrap();
        for g in gap {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn rising_motion_against_flat_appearance_is_the_motion_z_score() {
        let gap = motion_appearance_gap(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(gap, vec![-1.0, 1.0]);
    }

    #[test]
    fn motion_up_appearance_down_doubles_the_signal() {
        let gap = motion_appearance_gap(&[0.0, 1.0, 2.0], &[2.0, 1.0, 0.0]).unwrap();
        assert!(gap[0] < gap[1] && gap[1] < gap[2]);
        assert!((gap[2] - 2.0 * gap[2] / 2.0).abs() < 1e-12);
        assert!((gap[0] + gap[2]).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(motion_appearance_gap(&[1.0, 2.0], &[1.0]).is_err());
        assert!(motion_appearance_gap(&[1.0], &[1.0]).is_err());
    }
}
