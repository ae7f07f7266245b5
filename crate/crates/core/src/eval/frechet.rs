//! Fréchet distance between Gaussians fitted to per-clip feature rows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::Tensor;

/// Eigenvalues this far below zero (relative to the largest magnitude) are
/// treated as genuine non-PSD failures rather than rounding debris.
const PSD_TOLERANCE: f64 = 1e-8;

fn mean_and_cov(features: &Tensor) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let shape = features.shape();
    if shape.len() != 2 {
        return Err(Error::dim(format!(
            "feature rows must be [n, d], got {shape:?}"
        )));
    }
    let (n, d) = (shape[0], shape[1]);
    if n < 2 * d {
        return Err(Error::contract(format!(
            "covariance of {d}-dimensional features needs at least {} rows, got {n}",
            2 * d
        )));
    }
    let rows = DMatrix::from_row_slice(n, d, features.data());
    let mean = rows.row_mean().transpose();
    let mut centered = rows;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    Ok((mean, cov))
}

fn sqrt_psd(matrix: &DMatrix<f64>, label: &str) -> Result<DMatrix<f64>> {
    let eigen = matrix.clone().symmetric_eigen();
    let scale = eigen.eigenvalues.amax().max(1.0);
    let mut roots = eigen.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -PSD_TOLERANCE * scale {
            return Err(Error::numerical(format!(
                "{label} has eigenvalue {v}, not positive semi-definite"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eigen.eigenvectors * DMatrix::from_diagonal(&roots) * eigen.eigenvectors.transpose())
}

/// Squared Fréchet distance between `N(mu_a, cov_a)` and `N(mu_b, cov_b)`:
/// `|mu_a - mu_b|^2 + tr(cov_a + cov_b - 2 sqrt(cov_a cov_b))`. The cross
/// term is evaluated as `sqrt(sqrt(cov_a) cov_b sqrt(cov_a))` after
/// symmetrization, which shares the product's spectrum but stays symmetric.
pub fn frechet_from_stats(
    mean_a: &DVector<f64>,
    cov_a: &DMatrix<f64>,
    mean_b: &DVector<f64>,
    cov_b: &DMatrix<f64>,
) -> Result<f64> {
    if mean_a.len() != mean_b.len() || cov_a.shape() != cov_b.shape() {
        return Err(Error::dim(format!(
            "statistics disagree: means {}/{}, covariances {:?}/{:?}",
            mean_a.len(),
            mean_b.len(),
            cov_a.shape(),
            cov_b.shape()
        )));
    }
    let root_a = sqrt_psd(cov_a, "first covariance")?;
    let mut product = &root_a * cov_b * &root_a;
    product = (&product + product.transpose()) * 0.5;
    let cross = sqrt_psd(&product, "covariance product")?;
    let gap = mean_a - mean_b;
    let value = gap.norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
    if value < -1e-6 {
        return Err(Error::numerical(format!(
            "Fréchet distance came out at {value}, well below zero"
        )));
    }
    Ok(value.max(0.0))
}

/// Squared Fréchet distance between Gaussians fitted to two sets of feature
/// rows, each shaped `[n, d]` with `n >= 2d`.
pub fn frechet_feature_distance(features_a: &Tensor, features_b: &Tensor) -> Result<f64> {
    let (mean_a, cov_a) = mean_and_cov(features_a)?;
    let (mean_b, cov_b) = mean_and_cov(features_b)?;
    frechet_from_stats(&mean_a, &cov_a, &mean_b, &cov_b)
}
