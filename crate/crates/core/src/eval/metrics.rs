//! Per-clip summary features and the two scalar quality metrics: estimated
//! motion magnitude and nearest-neighbor appearance fidelity.

use crate::diffusion::Video;
use crate::error::{Error, Result};
use crate::features::{
    estimate_flow_hs, transport_residual, DEFAULT_FLOW_CONFIDENCE_SCALE, DEFAULT_FLOW_ITERATIONS,
    DEFAULT_FLOW_SMOOTHNESS,
};
use crate::Tensor;

use rayon::prelude::*;

/// Dimension of [`clip_features`] rows.
pub const CLIP_FEATURE_DIM: usize = 5;

/// Metrics iterate the flow solver to its fixed point (about 4x the budget
/// the feature pipeline uses) so reported magnitudes reflect the converged
/// field, not the iteration count.
pub const METRIC_FLOW_ITERATIONS: usize = 4 * DEFAULT_FLOW_ITERATIONS;

fn default_flow(clip: &Video) -> Result<crate::features::FlowField> {
    estimate_flow_hs(
        clip,
        DEFAULT_FLOW_SMOOTHNESS,
        METRIC_FLOW_ITERATIONS,
        DEFAULT_FLOW_CONFIDENCE_SCALE,
    )
}

fn mean_and_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var)
}

/// Five summary statistics of one clip: mean intensity, intensity variance,
/// mean flow magnitude, flow magnitude variance, and mean absolute transport
/// residual. The motion terms use the default flow estimator.
pub fn clip_features(clip: &Video) -> Result<[f64; CLIP_FEATURE_DIM]> {
    let (int_mean, int_var) = mean_and_var(clip.frames().data().iter().copied());
    let flow = default_flow(clip)?;
    let (flow_mean, flow_var) = mean_and_var(
        flow.u
            .data()
            .iter()
            .zip(flow.v.data())
            .map(|(&a, &b)| a.hypot(b)),
    );
    let residual = transport_residual(clip, &flow)?.mean_abs_delta();
    Ok([int_mean, int_var, flow_mean, flow_var, residual])
}

/// Feature rows `[n, 5]` for a set of clips, extracted in parallel.
pub fn feature_matrix(clips: &[Video]) -> Result<Tensor> {
    let rows: Vec<[f64; CLIP_FEATURE_DIM]> =
        clips.par_iter().map(clip_features).collect::<Result<_>>()?;
    Tensor::from_vec(
        &[clips.len(), CLIP_FEATURE_DIM],
        rows.into_iter().flatten().collect(),
    )
}

/// Mean estimated flow speed in pixels per frame, averaged over clips.
pub fn motion_magnitude(clips: &[Video]) -> Result<f64> {
    if clips.is_empty() {
        return Err(Error::contract("motion magnitude needs at least one clip"));
    }
    let total: f64 = clips
        .par_iter()
        .map(|clip| default_flow(clip).map(|f| f.mean_magnitude()))
        .try_reduce(|| 0.0, |a, b| Ok(a + b))?;
    Ok(total / clips.len() as f64)
}

/// Appearance fidelity of generated clips against a clean reference set:
/// each generated frame is charged the MSE to its nearest reference frame,
/// and the mean charge is reported as `1 - MSE` so that higher is better
/// and a clip copied from the reference scores exactly 1.
pub fn appearance_score(clips: &[Video], reference: &[Video]) -> Result<f64> {
    if clips.is_empty() || reference.is_empty() {
        return Err(Error::contract(
            "appearance score needs nonempty generated and reference sets",
        ));
    }
    let (h, w) = (reference[0].h(), reference[0].w());
    for clip in clips.iter().chain(reference) {
        if clip.h() != h || clip.w() != w {
            return Err(Error::dim(format!(
                "appearance score needs a uniform frame size, got {}x{} vs {h}x{w}",
                clip.h(),
                clip.w()
            )));
        }
    }
    let ref_frames: Vec<&[f64]> = reference
        .iter()
        .flat_map(|clip| (0..clip.t()).map(move |t| clip.frame(t)))
        .collect();
    let charges: Vec<f64> = clips
        .par_iter()
        .flat_map_iter(|clip| (0..clip.t()).map(move |t| clip.frame(t)))
        .map(|frame| {
            ref_frames
                .iter()
                .map(|other| {
                    frame
                        .iter()
                        .zip(other.iter())
                        .map(|(&a, &b)| (a - b) * (a - b))
                        .sum::<f64>()
                        / frame.len() as f64
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(1.0 - charges.iter().sum::<f64>() / charges.len() as f64)
}
