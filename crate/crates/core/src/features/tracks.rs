//! Sparse point tracking and the per-point descriptor consumed by the
//! long-term motion discriminator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::Video;
use crate::error::{Error, Result};
use crate::rng::{derive_rng, salt};
use crate::toyworld::GroundTruth;
use crate::Tensor;

/// Trajectories of M query points through T frames, with per-frame
/// visibility and confidence. The motion state fed to the discriminator is
/// `[tau_d, tau_v, tau_c]`; absolute positions stay out of it.
#[derive(Debug, Clone)]
pub struct TrajectoryDescriptor {
    /// Positions in pixels, `[T, M, 2]`, components (h, w).
    pub tau: Tensor,
    /// First differences `tau[t] - tau[t-1]`, `[T-1, M, 2]`.
    pub tau_d: Tensor,
    /// Visibility in {0, 1}, `[T, M]`.
    pub tau_v: Tensor,
    /// Match confidence in [0, 1], `[T, M]`.
    pub tau_c: Tensor,
}

impl TrajectoryDescriptor {
    /// Builds the descriptor from positions plus per-frame visibility and
    /// confidence; the drift component is derived here so it is first
    /// differences by construction.
    pub fn from_parts(tau: Tensor, tau_v: Tensor, tau_c: Tensor) -> Result<Self> {
        let shape = tau.shape().to_vec();
        if shape.len() != 3 || shape[2] != 2 {
            return Err(Error::dim(format!(
                "positions must be [T, M, 2], got {shape:?}"
            )));
        }
        let (t, m) = (shape[0], shape[1]);
        if t < 2 {
            return Err(Error::dim("descriptors need at least 2 frames"));
        }
        if tau_v.shape() != [t, m] || tau_c.shape() != [t, m] {
            return Err(Error::dim(format!(
                "visibility {:?} and confidence {:?} must both be [{t}, {m}]",
                tau_v.shape(),
                tau_c.shape()
            )));
        }
        if tau_v.data().iter().any(|&x| x != 0.0 && x != 1.0) {
            return Err(Error::contract("visibility values must be 0 or 1"));
        }
        if tau_c.data().iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::contract("confidence values must lie in [0, 1]"));
        }
        let mut drift = Vec::with_capacity((t - 1) * m * 2);
        for step in 1..t {
            let (cur, prev) = (step * m * 2, (step - 1) * m * 2);
            for i in 0..m * 2 {
                drift.push(tau.data()[cur + i] - tau.data()[prev + i]);
            }
        }
        Ok(Self {
            tau,
            tau_d: Tensor::from_vec(&[t - 1, m, 2], drift)?,
            tau_v,
            tau_c,
        })
    }

    pub fn frames(&self) -> usize {
        self.tau.shape()[0]
    }

    pub fn points(&self) -> usize {
        self.tau.shape()[1]
    }

    /// Per-point feature rows `[M, 4T-2]`: the point's drift series, then
    /// its visibility series, then its confidence series.
    pub fn point_features(&self) -> Tensor {
        let (t, m) = (self.frames(), self.points());
        let width = 4 * t - 2;
        let mut data = Vec::with_capacity(m * width);
        for p in 0..m {
            for step in 0..t - 1 {
                data.push(self.tau_d.data()[(step * m + p) * 2]);
                data.push(self.tau_d.data()[(step * m + p) * 2 + 1]);
            }
            for step in 0..t {
                data.push(self.tau_v.data()[step * m + p]);
            }
            for step in 0..t {
                data.push(self.tau_c.data()[step * m + p]);
            }
        }
        Tensor::from_vec(&[m, width], data).expect("shape matches construction")
    }

    /// Copy with the query points reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let (t, m) = (self.frames(), self.points());
        if perm.len() != m {
            return Err(Error::contract(format!(
                "permutation has {} entries for {m} points",
                perm.len()
            )));
        }
        let mut tau = vec![0.0; t * m * 2];
        let mut tau_v = vec![0.0; t * m];
        let mut tau_c = vec![0.0; t * m];
        for step in 0..t {
            for (dst, &src) in perm.iter().enumerate() {
                tau[(step * m + dst) * 2] = self.tau.data()[(step * m + src) * 2];
                tau[(step * m + dst) * 2 + 1] = self.tau.data()[(step * m + src) * 2 + 1];
                tau_v[step * m + dst] = self.tau_v.data()[step * m + src];
                tau_c[step * m + dst] = self.tau_c.data()[step * m + src];
            }
        }
        Self::from_parts(
            Tensor::from_vec(&[t, m, 2], tau)?,
            Tensor::from_vec(&[t, m], tau_v)?,
            Tensor::from_vec(&[t, m], tau_c)?,
        )
    }
}

pub const DEFAULT_TRACK_WINDOW: usize = 7;
pub const DEFAULT_TRACK_SEARCH: usize = 3;
pub const DEFAULT_SSD_SCALE: f64 = 0.1;
pub const DEFAULT_GAP_SCALE: f64 = 0.05;
pub const DEFAULT_VISIBILITY_THRESHOLD: f64 = 0.1;

/// Block-matching tracker settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackParams {
    /// Odd side length of the matching window in pixels.
    pub window: usize,
    /// Search radius in pixels around the previous position.
    pub search: usize,
    /// Confidence scale for the mean squared difference of the best match.
    pub ssd_scale: f64,
    /// Confidence scale for the margin between the best match and the best
    /// clearly-distinct match (Chebyshev distance >= 2); flat cost surfaces
    /// get near-zero confidence.
    pub gap_scale: f64,
    /// Points drop to invisible when confidence falls below this.
    pub visibility_threshold: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            window: DEFAULT_TRACK_WINDOW,
            search: DEFAULT_TRACK_SEARCH,
            ssd_scale: DEFAULT_SSD_SCALE,
            gap_scale: DEFAULT_GAP_SCALE,
            visibility_threshold: DEFAULT_VISIBILITY_THRESHOLD,
        }
    }
}

impl TrackParams {
    fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 || self.window < 3 {
            return Err(Error::contract(format!(
                "matching window {} must be odd and at least 3",
                self.window
            )));
        }
        if self.search == 0 {
            return Err(Error::contract("search radius must be at least 1"));
        }
        if self.ssd_scale <= 0.0 || self.gap_scale <= 0.0 {
            return Err(Error::contract("confidence scales must be positive"));
        }
        Ok(())
    }
}

/// Bilinear sample of one frame at a continuous pixel-center coordinate,
/// replicating border values outside the frame.
fn sample(frame: &[f64], height: usize, width: usize, p: [f64; 2]) -> f64 {
    let gh = p[0] - 0.5;
    let gw = p[1] - 0.5;
    let h0 = gh.floor();
    let w0 = gw.floor();
    let (fh, fw) = (gh - h0, gw - w0);
    let clamp = |x: f64, n: usize| (x.max(0.0) as usize).min(n - 1);
    let (ha, hb) = (clamp(h0, height), clamp(h0 + 1.0, height));
    let (wa, wb) = (clamp(w0, width), clamp(w0 + 1.0, width));
    frame[ha * width + wa] * (1.0 - fh) * (1.0 - fw)
        + frame[ha * width + wb] * (1.0 - fh) * fw
        + frame[hb * width + wa] * fh * (1.0 - fw)
        + frame[hb * width + wb] * fh * fw
}

/// Tracks query points by frame-to-frame block matching.
///
/// Each step compares the window around the current position with windows
/// at integer offsets within the search radius (mean squared difference),
/// preferring the smallest displacement on ties, then refines the best
/// offset to subpixel precision with a 1D parabola fit per axis.
pub fn track_points_bm(
    clip: &Video,
    queries: &[[f64; 2]],
    params: &TrackParams,
) -> Result<TrajectoryDescriptor> {
    params.validate()?;
    if queries.is_empty() {
        return Err(Error::contract("tracking needs at least one query point"));
    }
    let (t, height, width) = (clip.t(), clip.h(), clip.w());
    let (hf, wf) = (height as f64, width as f64);
    for (i, q) in queries.iter().enumerate() {
        if !(0.0..hf).contains(&q[0]) || !(0.0..wf).contains(&q[1]) {
            return Err(Error::contract(format!(
                "query {i} at ({}, {}) is outside the {height}x{width} frame",
                q[0], q[1]
            )));
        }
    }
    let m = queries.len();
    let half = (params.window / 2) as i64;
    let radius = params.search as i64;
    // Offsets ordered smallest-displacement-first so ties on flat cost
    // surfaces keep the point where it is.
    let mut offsets: Vec<[i64; 2]> = (-radius..=radius)
        .flat_map(|dh| (-radius..=radius).map(move |dw| [dh, dw]))
        .collect();
    offsets.sort_by_key(|o| (o[0].abs().max(o[1].abs()), o[0], o[1]));

    let mut tau = vec![0.0; t * m * 2];
    let mut tau_v = vec![0.0; t * m];
    let mut tau_c = vec![0.0; t * m];
    for (p, q) in queries.iter().enumerate() {
        tau[p * 2] = q[0];
        tau[p * 2 + 1] = q[1];
        tau_v[p] = 1.0;
        tau_c[p] = 1.0;
    }

    let window_px = (params.window * params.window) as f64;
    for step in 0..t - 1 {
        let prev = clip.frame(step);
        let next = clip.frame(step + 1);
        for p in 0..m {
            let at = (step * m + p) * 2;
            let pos = [tau[at], tau[at + 1]];
            let reference: Vec<f64> = window_points(pos, half)
                .map(|wp| sample(prev, height, width, wp))
                .collect();
            let cost = |offset: [f64; 2]| {
                let center = [pos[0] + offset[0], pos[1] + offset[1]];
                window_points(center, half)
                    .zip(&reference)
                    .map(|(wp, &r)| {
                        let d = sample(next, height, width, wp) - r;
                        d * d
                    })
                    .sum::<f64>()
                    / window_px
            };
            let costs: Vec<f64> = offsets
                .iter()
                .map(|o| cost([o[0] as f64, o[1] as f64]))
                .collect();
            let mut best = 0;
            for (i, &c) in costs.iter().enumerate() {
                if c < costs[best] {
                    best = i;
                }
            }
            let best_offset = offsets[best];
            let best_cost = costs[best];
            let gap = offsets
                .iter()
                .zip(&costs)
                .filter(|(o, _)| {
                    (o[0] - best_offset[0]).abs().max((o[1] - best_offset[1]).abs()) >= 2
                })
                .map(|(_, &c)| c - best_cost)
                .fold(f64::INFINITY, f64::min);
            let gap = if gap.is_finite() { gap.max(0.0) } else { 0.0 };

            let mut refined = [best_offset[0] as f64, best_offset[1] as f64];
            for axis in 0..2 {
                // A (near-)exact integer match needs no refinement; the fit
                // would chase neighborhood asymmetry instead of the minimum.
                if best_cost <= 1e-12 || best_offset[axis].abs() == radius {
                    continue;
                }
                let mut lo = [best_offset[0] as f64, best_offset[1] as f64];
                let mut hi = lo;
                lo[axis] -= 1.0;
                hi[axis] += 1.0;
                let (cl, ch) = (cost(lo), cost(hi));
                let denom = cl - 2.0 * best_cost + ch;
                if denom > 1e-12 {
                    refined[axis] += (0.5 * (cl - ch) / denom).clamp(-0.5, 0.5);
                }
            }

            let confidence =
                (-best_cost / params.ssd_scale).exp() * (1.0 - (-gap / params.gap_scale).exp());
            let next_at = ((step + 1) * m + p) * 2;
            tau[next_at] = (pos[0] + refined[0]).clamp(0.0, hf - 1e-9);
            tau[next_at + 1] = (pos[1] + refined[1]).clamp(0.0, wf - 1e-9);
            tau_v[(step + 1) * m + p] = f64::from(confidence >= params.visibility_threshold);
            tau_c[(step + 1) * m + p] = confidence.clamp(0.0, 1.0);
        }
    }
    TrajectoryDescriptor::from_parts(
        Tensor::from_vec(&[t, m, 2], tau)?,
        Tensor::from_vec(&[t, m], tau_v)?,
        Tensor::from_vec(&[t, m], tau_c)?,
    )
}

/// Iterator over the window sample coordinates centered on `pos`.
fn window_points(pos: [f64; 2], half: i64) -> impl Iterator<Item = [f64; 2]> {
    (-half..=half).flat_map(move |dh| {
        (-half..=half).map(move |dw| [pos[0] + dh as f64, pos[1] + dw as f64])
    })
}

/// Exact trajectories lifted from scene ground truth; visible points carry
/// full confidence, occluded or out-of-frame points carry zero.
pub fn tracks_from_gt(truth: &GroundTruth, queries: &[[f64; 2]]) -> Result<TrajectoryDescriptor> {
    if queries.is_empty() {
        return Err(Error::contract("tracking needs at least one query point"));
    }
    let tracks = truth.tracks(queries);
    let (t, m) = (truth.frames, queries.len());
    let mut tau = Vec::with_capacity(t * m * 2);
    let mut tau_v = Vec::with_capacity(t * m);
    for step in 0..t {
        for p in 0..m {
            tau.extend_from_slice(&tracks.positions[step][p]);
            tau_v.push(f64::from(tracks.visible[step][p]));
        }
    }
    let tau_v = Tensor::from_vec(&[t, m], tau_v)?;
    let tau_c = tau_v.clone();
    TrajectoryDescriptor::from_parts(Tensor::from_vec(&[t, m, 2], tau)?, tau_v, tau_c)
}

/// How query points are placed on the first frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    Random,
    Grid,
}

/// Draws M query points: i.i.d. uniform in random mode, a near-square
/// lattice of cell centers in grid mode.
pub fn sample_queries(
    mode: QueryMode,
    m: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    if m == 0 {
        return Err(Error::contract("query sampling needs M >= 1"));
    }
    match mode {
        QueryMode::Random => {
            let mut rng = derive_rng(seed, &[salt::QUERIES]);
            Ok((0..m)
                .map(|_| {
                    [
                        rng.gen_range(0.0..height as f64),
                        rng.gen_range(0.0..width as f64),
                    ]
                })
                .collect())
        }
        QueryMode::Grid => {
            let rows = ((m as f64 * height as f64 / width as f64).sqrt().round() as usize)
                .clamp(1, m);
            let cols = m.div_ceil(rows);
            let cell_h = height as f64 / rows as f64;
            let cell_w = width as f64 / cols as f64;
            Ok((0..m)
                .map(|i| {
                    let (r, c) = (i / cols, i % cols);
                    [(r as f64 + 0.5) * cell_h, (c as f64 + 0.5) * cell_w]
                })
                .collect())
        }
    }
}
