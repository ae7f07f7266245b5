//! Dense optical flow, the transport residual built on it, and the stacked
//! input consumed by the instantaneous motion discriminator.

use crate::diffusion::Video;
use crate::error::{Error, Result};
use crate::toyworld::GroundTruth;
use crate::Tensor;

use super::grad::{sobel_raw, temporal_derivative};

/// Dense per-frame-pair motion estimate. `u` moves down rows (dh/dt), `v`
/// moves right across columns (dw/dt), both in pixels per frame.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub u: Tensor,
    pub v: Tensor,
    /// Brightness-constancy confidence in [0, 1], per pixel and frame pair.
    pub confidence: Tensor,
}

impl FlowField {
    pub fn new(u: Tensor, v: Tensor, confidence: Tensor) -> Result<Self> {
        if u.shape() != v.shape() || u.shape() != confidence.shape() {
            return Err(Error::dim(format!(
                "flow components disagree: u {:?}, v {:?}, confidence {:?}",
                u.shape(),
                v.shape(),
                confidence.shape()
            )));
        }
        if u.shape().len() != 3 {
            return Err(Error::dim(format!(
                "flow fields are [T-1, H, W], got {:?}",
                u.shape()
            )));
        }
        if confidence.data().iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(Error::contract("flow confidence left [0, 1]"));
        }
        Ok(Self { u, v, confidence })
    }

    pub fn pairs(&self) -> usize {
        self.u.shape()[0]
    }

    pub fn h(&self) -> usize {
        self.u.shape()[1]
    }

    pub fn w(&self) -> usize {
        self.u.shape()[2]
    }

    /// Mean speed over all pixels and frame pairs.
    pub fn mean_magnitude(&self) -> f64 {
        let n = self.u.numel().max(1) as f64;
        self.u
            .data()
            .iter()
            .zip(self.v.data())
            .map(|(&a, &b)| a.hypot(b))
            .sum::<f64>()
            / n
    }
}

/// Exact flow lifted from scene ground truth, with full confidence.
pub fn flow_from_gt(truth: &GroundTruth) -> FlowField {
    let (u, v) = truth.flow();
    let confidence = Tensor::filled(u.shape(), 1.0);
    FlowField { u, v, confidence }
}

pub const DEFAULT_FLOW_SMOOTHNESS: f64 = 0.02;
pub const DEFAULT_FLOW_ITERATIONS: usize = 200;
pub const DEFAULT_FLOW_CONFIDENCE_SCALE: f64 = 0.05;

/// Estimates dense flow by Horn-Schunck iteration on each frame pair.
///
/// `smoothness` weights the membrane regularizer against the brightness
/// constraint; more smoothing spreads motion further into untextured
/// regions. Frames are treated as periodic in both axes, which makes the
/// estimate exactly equivariant to integer cyclic shifts of the clip.
/// Confidence is `exp(-|linearized residual| / confidence_scale)`.
pub fn estimate_flow_hs(
    clip: &Video,
    smoothness: f64,
    iterations: usize,
    confidence_scale: f64,
) -> Result<FlowField> {
    if smoothness <= 0.0 {
        return Err(Error::config(format!(
            "flow smoothness {smoothness} must be positive"
        )));
    }
    if iterations == 0 {
        return Err(Error::config("flow estimation needs at least 1 iteration"));
    }
    if confidence_scale <= 0.0 {
        return Err(Error::config(format!(
            "confidence scale {confidence_scale} must be positive"
        )));
    }
    let (t, h, w) = (clip.t(), clip.h(), clip.w());
    let mut u_all = Vec::with_capacity((t - 1) * h * w);
    let mut v_all = Vec::with_capacity((t - 1) * h * w);
    let mut conf_all = Vec::with_capacity((t - 1) * h * w);
    for step in 0..t - 1 {
        let (u, v, residual) = hs_pair(
            clip.frame(step),
            clip.frame(step + 1),
            h,
            w,
            smoothness,
            iterations,
        );
        conf_all.extend(residual.iter().map(|&r| (-r.abs() / confidence_scale).exp()));
        u_all.extend(u);
        v_all.extend(v);
    }
    let shape = [t - 1, h, w];
    FlowField::new(
        Tensor::from_vec(&shape, u_all)?,
        Tensor::from_vec(&shape, v_all)?,
        Tensor::from_vec(&shape, conf_all)?,
    )
}

/// One Horn-Schunck solve. Returns (u, v, linearized residual).
fn hs_pair(
    prev: &[f64],
    next: &[f64],
    height: usize,
    width: usize,
    smoothness: f64,
    iterations: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = height * width;
    // Gradients averaged over the two frames, periodic borders.
    let (gh_a, gw_a) = sobel_raw(prev, height, width, true);
    let (gh_b, gw_b) = sobel_raw(next, height, width, true);
    let ih: Vec<f64> = gh_a.iter().zip(&gh_b).map(|(&a, &b)| 0.5 * (a + b)).collect();
    let iw: Vec<f64> = gw_a.iter().zip(&gw_b).map(|(&a, &b)| 0.5 * (a + b)).collect();
    let it: Vec<f64> = prev.iter().zip(next).map(|(&a, &b)| b - a).collect();

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut u_next = vec![0.0; n];
    let mut v_next = vec![0.0; n];
    for _ in 0..iterations {
        for h in 0..height {
            let up = (h + height - 1) % height * width;
            let down = (h + 1) % height * width;
            let row = h * width;
            for w in 0..width {
                let left = (w + width - 1) % width;
                let right = (w + 1) % width;
                let avg = |f: &[f64]| {
                    (f[up + w] + f[down + w] + f[row + left] + f[row + right]) / 6.0
                        + (f[up + left] + f[up + right] + f[down + left] + f[down + right]) / 12.0
                };
                let i = row + w;
                let (ub, vb) = (avg(&u), avg(&v));
                let common =
                    (ih[i] * ub + iw[i] * vb + it[i]) / (smoothness + ih[i] * ih[i] + iw[i] * iw[i]);
                u_next[i] = ub - ih[i] * common;
                v_next[i] = vb - iw[i] * common;
            }
        }
        std::mem::swap(&mut u, &mut u_next);
        std::mem::swap(&mut v, &mut v_next);
    }
    let residual: Vec<f64> = (0..n)
        .map(|i| ih[i] * u[i] + iw[i] * v[i] + it[i])
        .collect();
    (u, v, residual)
}

/// Per-pixel failure of brightness transport under a given flow.
#[derive(Debug, Clone)]
pub struct ResidualMap {
    /// `delta[t] = dI/dt[t] + u[t] * dI/dh[t] + v[t] * dI/dw[t]`, with
    /// spatial gradients taken on frame t. Shaped `[T-1, H, W]`.
    pub delta: Tensor,
    /// Copied from the flow field.
    pub confidence: Tensor,
}

impl ResidualMap {
    pub fn mean_abs_delta(&self) -> f64 {
        let n = self.delta.numel().max(1) as f64;
        self.delta.data().iter().map(|x| x.abs()).sum::<f64>() / n
    }
}

/// Evaluates the transport residual of `clip` under `flow`.
pub fn transport_residual(clip: &Video, flow: &FlowField) -> Result<ResidualMap> {
    let (t, h, w) = (clip.t(), clip.h(), clip.w());
    if flow.pairs() != t - 1 || flow.h() != h || flow.w() != w {
        return Err(Error::dim(format!(
            "flow shape {:?} does not match clip [{t}, {h}, {w}]",
            flow.u.shape()
        )));
    }
    let dt = temporal_derivative(clip);
    let mut delta = Vec::with_capacity((t - 1) * h * w);
    for step in 0..t - 1 {
        let (gh, gw) = sobel_raw(clip.frame(step), h, w, false);
        let base = step * h * w;
        for i in 0..h * w {
            delta.push(
                dt.data()[base + i]
                    + flow.u.data()[base + i] * gh[i]
                    + flow.v.data()[base + i] * gw[i],
            );
        }
    }
    Ok(ResidualMap {
        delta: Tensor::from_vec(&[t - 1, h, w], delta)?,
        confidence: flow.confidence.clone(),
    })
}

/// Stacks the transport residual with the flow confidence into the
/// discriminator input, shaped `[T-1, 2, H, W]`.
pub fn imr_input(clip: &Video, flow: &FlowField) -> Result<Tensor> {
    let residual = transport_residual(clip, flow)?;
    let (pairs, h, w) = (flow.pairs(), flow.h(), flow.w());
    let mut data = Vec::with_capacity(pairs * 2 * h * w);
    for step in 0..pairs {
        let base = step * h * w;
        data.extend_from_slice(&residual.delta.data()[base..base + h * w]);
        data.extend_from_slice(&residual.confidence.data()[base..base + h * w]);
    }
    Tensor::from_vec(&[pairs, 2, h, w], data)
}
