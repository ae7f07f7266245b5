//! AdamW with decoupled weight decay, plus global-norm gradient clipping.

use std::collections::HashMap;

use crate::error::Result;
use crate::ndgrad::graph::GradientMap;
use crate::ndgrad::store::{ParamId, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig<S: Scalar> {
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    pub weight_decay: S,
}

impl<S: Scalar> AdamWConfig<S> {
    pub fn new(lr: S) -> Self {
        AdamWConfig {
            lr,
            beta1: S::of(0.9),
            beta2: S::of(0.95),
            eps: S::of(1e-8),
            weight_decay: S::of(0.01),
        }
    }
}

/// AdamW over one parameter store. Moment buffers are lazily created per
/// parameter; the bias-correction step count is global to the optimizer.
#[derive(Debug)]
pub struct AdamW<S: Scalar> {
    cfg: AdamWConfig<S>,
    step: u64,
    first_moment: HashMap<ParamId, Vec<S>>,
    second_moment: HashMap<ParamId, Vec<S>>,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(cfg: AdamWConfig<S>) -> Self {
        AdamW {
            cfg,
            step: 0,
            first_moment: HashMap::new(),
            second_moment: HashMap::new(),
        }
    }

    pub fn config(&self) -> &AdamWConfig<S> {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// True if the optimizer holds moment state for the given parameter.
    /// Shadow copies of a model must never appear here.
    pub fn tracks(&self, id: ParamId) -> bool {
        self.first_moment.contains_key(&id)
    }

    /// One update over every parameter in the store, in store order.
    /// Parameters missing from the gradient map are treated as having zero
    /// gradient; decoupled weight decay still applies to them.
    pub fn step(&mut self, store: &mut ParamStore<S>, grads: &GradientMap<S>) -> Result<()> {
        self.step += 1;
        let c = self.cfg;
        let bias1 = S::one() - c.beta1.powi(self.step as i32);
        let bias2 = S::one() - c.beta2.powi(self.step as i32);
        for id in store.ids() {
            let numel = store.get(id).numel();
            let m = self
                .first_moment
                .entry(id)
                .or_insert_with(|| vec![S::zero(); numel]);
            let v = self
                .second_moment
                .entry(id)
                .or_insert_with(|| vec![S::zero(); numel]);
            let grad = grads.get(&id).map(|t| t.data());
            let params = store.get_mut(id).data_mut();
            for i in 0..numel {
                let g = grad.map_or(S::zero(), |g| g[i]);
                m[i] = c.beta1 * m[i] + (S::one() - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (S::one() - c.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                params[i] = params[i]
                    - c.lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * params[i]);
            }
        }
        Ok(())
    }
}

/// Computes the global L2 norm over all gradients in the map.
pub fn global_grad_norm<S: Scalar>(grads: &GradientMap<S>) -> S {
    let mut total = S::zero();
    for t in grads.values() {
        for &g in t.data() {
            total += g * g;
        }
    }
    total.sqrt()
}

/// Scales all gradients in place so the global norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grad_norm<S: Scalar>(grads: &mut GradientMap<S>, max_norm: S) -> S {
    let norm = global_grad_norm(grads);
    if norm > max_norm && norm > S::zero() {
        let scale = max_norm / norm;
        for t in grads.values_mut() {
            for g in t.data_mut() {
                *g *= scale;
            }
        }
    }
    norm
}
