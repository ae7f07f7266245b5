//! Linear-beta DDPM noise schedule and its derived coefficient tables.

use crate::error::{Error, Result};
use crate::ndgrad::checkpoint::Checkpoint;
use crate::ndgrad::tensor::Tensor;
use crate::scalar::Scalar;

/// Variance schedule over timesteps `1..=T`, with the usual derived arrays.
/// Index convention: `beta[t-1]` holds the value for timestep `t`, and
/// `alpha_bar(0)` is defined as 1 (the identity forward process).
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<S: Scalar> {
    beta: Vec<S>,
    alpha: Vec<S>,
    alpha_bar: Vec<S>,
    posterior_var: Vec<S>,
}

impl<S: Scalar> Schedule<S> {
    /// Builds a schedule with `T` steps and beta interpolated linearly from
    /// `beta_start` (t=1) to `beta_end` (t=T).
    pub fn linear(t_count: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_count < 2 {
            return Err(Error::config(format!(
                "schedule needs at least 2 steps, got {t_count}"
            )));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::config(format!(
                "schedule bounds must satisfy 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let beta: Vec<S> = (0..t_count)
            .map(|i| {
                let frac = i as f64 / (t_count - 1) as f64;
                S::of(beta_start + (beta_end - beta_start) * frac)
            })
            .collect();
        Self::from_beta(beta)
    }

    /// Builds the derived arrays from an explicit beta table.
    pub fn from_beta(beta: Vec<S>) -> Result<Self> {
        if beta.len() < 2 {
            return Err(Error::config(format!(
                "schedule needs at least 2 steps, got {}",
                beta.len()
            )));
        }
        if beta.iter().any(|&b| b <= S::zero() || b >= S::one()) {
            return Err(Error::config("beta values must lie in (0, 1)".to_string()));
        }
        let alpha: Vec<S> = beta.iter().map(|&b| S::one() - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut product = S::one();
        for &a in &alpha {
            product = product * a;
            alpha_bar.push(product);
        }
        let posterior_var: Vec<S> = (0..beta.len())
            .map(|i| {
                let prev = if i == 0 { S::one() } else { alpha_bar[i - 1] };
                (S::one() - prev) / (S::one() - alpha_bar[i]) * beta[i]
            })
            .collect();
        Ok(Schedule {
            beta,
            alpha,
            alpha_bar,
            posterior_var,
        })
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// Beta at timestep `t ∈ 1..=T`.
    pub fn beta(&self, t: usize) -> S {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> S {
        self.alpha[t - 1]
    }

    /// Cumulative product of alpha up to `t`, with `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, t: usize) -> S {
        if t == 0 {
            S::one()
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// Posterior variance at timestep `t ∈ 1..=T`; zero at t=1.
    pub fn posterior_var(&self, t: usize) -> S {
        self.posterior_var[t - 1]
    }

    pub fn beta_table(&self) -> &[S] {
        &self.beta
    }

    /// Evenly strided sub-schedule of `steps` timesteps ending at T,
    /// returned in sampling order (largest first). `steps = T` returns
    /// `[T, T-1, ..., 1]`.
    pub fn strided_timesteps(&self, steps: usize) -> Result<Vec<usize>> {
        let t_count = self.len();
        if steps == 0 || steps > t_count {
            return Err(Error::config(format!(
                "step count must be in 1..={t_count}, got {steps}"
            )));
        }
        let mut ts: Vec<usize> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    t_count
                } else {
                    // Evenly spaced over [1, T], rounded to integers.
                    let frac = i as f64 / (steps - 1) as f64;
                    (1.0 + frac * (t_count - 1) as f64).round() as usize
                }
            })
            .collect();
        ts.dedup();
        ts.reverse();
        Ok(ts)
    }

    pub fn save_into(&self, ckpt: &mut Checkpoint) {
        let beta: Vec<f64> = self.beta.iter().map(|b| b.to_f64_lossy()).collect();
        let n = beta.len();
        ckpt.insert(
            "schedule/beta",
            Tensor::from_vec(&[n], beta).expect("beta length matches its own shape"),
        );
    }

    pub fn load_from(ckpt: &Checkpoint) -> Result<Self> {
        let beta = ckpt
            .get("schedule/beta")
            .ok_or_else(|| Error::contract("checkpoint has no schedule/beta entry".to_string()))?;
        Self::from_beta(beta.data().iter().map(|&b| S::of(b)).collect())
    }
}
