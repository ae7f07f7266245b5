//! Finite-difference gradient oracle.
//!
//! Central differences over parameter coordinates, independent of the
//! reverse-mode implementation. Test code rebuilds the forward pass from a
//! parameter store through a closure, so the oracle exercises the public
//! graph API exactly the way model code does.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ndgrad::graph::GradientMap;
use crate::ndgrad::store::{ParamId, ParamStore};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Central difference of `loss` along one coordinate of one parameter.
pub fn central_difference<F>(
    store: &mut ParamStore<f64>,
    id: ParamId,
    coord: usize,
    h: f64,
    mut loss: F,
) -> f64
where
    F: FnMut(&ParamStore<f64>) -> f64,
{
    let original = store.get(id).data()[coord];
    store.get_mut(id).data_mut()[coord] = original + h;
    let plus = loss(store);
    store.get_mut(id).data_mut()[coord] = original - h;
    let minus = loss(store);
    store.get_mut(id).data_mut()[coord] = original;
    (plus - minus) / (2.0 * h)
}

/// Relative error with a floor that keeps near-zero gradients comparable.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Checks reverse-mode gradients against central differences on up to
/// `coords_per_param` randomly chosen coordinates of every parameter.
/// Returns the worst relative error seen.
pub fn max_gradient_error<F, R>(
    store: &mut ParamStore<f64>,
    grads: &GradientMap<f64>,
    coords_per_param: usize,
    h: f64,
    rng: &mut R,
    mut loss: F,
) -> f64
where
    F: FnMut(&ParamStore<f64>) -> f64,
    R: Rng + ?Sized,
{
    let mut worst = 0.0f64;
    for id in store.ids() {
        let numel = store.get(id).numel();
        let mut coords: Vec<usize> = (0..numel).collect();
        coords.shuffle(rng);
        coords.truncate(coords_per_param.min(numel));
        for coord in coords {
            let numeric = central_difference(store, id, coord, h, &mut loss);
            let analytic = grads
                .get(&id)
                .map(|t| t.data()[coord])
                .unwrap_or(0.0);
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    worst
}
