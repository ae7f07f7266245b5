//! Scene sampling, anti-aliased rendering, and exact motion ground truth.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::Video;
use crate::error::{Error, Result};
use crate::rng::{derive_rng, salt, RunRng};
use crate::Tensor;

/// Shape of a single rendered object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Disc,
    Square,
}

/// Which shapes a scene may contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindPolicy {
    Discs,
    Squares,
    Mixed,
}

/// Parameters of the clip generator.
///
/// Positions and velocities use (h, w) component order: the first component
/// moves down rows, the second moves right across columns. Squares are
/// axis-aligned with half-side `radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub n_objects: usize,
    pub kinds: KindPolicy,
    /// Object radius bounds in pixels (half-side for squares).
    pub radius_range: (f64, f64),
    /// Object speed bounds in pixels per frame; direction is uniform.
    pub speed_range: (f64, f64),
    /// Peak object brightness bounds.
    pub intensity_range: (f64, f64),
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub background: f64,
    /// When set, object positions live on a torus and shapes re-enter on the
    /// opposite edge; when clear, placement keeps every object fully inside
    /// the frame for the whole clip.
    pub wrap_around: bool,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_objects: 2,
            kinds: KindPolicy::Mixed,
            radius_range: (3.0, 5.0),
            speed_range: (0.5, 1.5),
            intensity_range: (0.55, 0.95),
            height: 32,
            width: 32,
            frames: 8,
            background: 0.1,
            wrap_around: true,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(Error::config("scene height and width must be at least 8"));
        }
        if self.frames < 2 {
            return Err(Error::config("scene needs at least 2 frames"));
        }
        let (r_lo, r_hi) = self.radius_range;
        if !(0.5 <= r_lo && r_lo <= r_hi) {
            return Err(Error::config(format!(
                "radius_range ({r_lo}, {r_hi}) must satisfy 0.5 <= lo <= hi"
            )));
        }
        if 2.0 * r_hi + 1.0 > self.height.min(self.width) as f64 {
            return Err(Error::config(format!(
                "radius {r_hi} does not fit a {}x{} frame",
                self.height, self.width
            )));
        }
        let (s_lo, s_hi) = self.speed_range;
        if !(0.0 <= s_lo && s_lo <= s_hi) {
            return Err(Error::config(format!(
                "speed_range ({s_lo}, {s_hi}) must satisfy 0 <= lo <= hi"
            )));
        }
        let traversal = s_hi * (self.frames - 1) as f64;
        if traversal > self.height.min(self.width) as f64 / 2.0 {
            return Err(Error::config(format!(
                "speed {s_hi} px/frame traverses {traversal} px over the clip, \
                 more than half the frame; objects would be untrackable"
            )));
        }
        let (i_lo, i_hi) = self.intensity_range;
        if !(0.0 <= i_lo && i_lo <= i_hi && i_hi <= 1.0) {
            return Err(Error::config(format!(
                "intensity_range ({i_lo}, {i_hi}) must lie inside [0, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&self.background) {
            return Err(Error::config(format!(
                "background {} must lie inside [0, 1]",
                self.background
            )));
        }
        Ok(())
    }
}

/// Depth of the radial shading inside each object: the rim renders this
/// fraction darker than the peak, giving shapes an interior gradient.
const RIM_SHADE: f64 = 0.3;

/// Width in pixels of the intensity ramp straddling each object boundary.
/// Soft rims both anti-alias the rendering and keep frame-to-frame intensity
/// changes close to the first-order transport model that the motion features
/// assume.
const EDGE_SOFTNESS: f64 = 1.5;

/// Minimum clearance in pixels kept between object boundaries in every frame.
const PLACEMENT_MARGIN: f64 = 1.0;

/// Placement attempts per object before generation gives up.
const PLACEMENT_RETRIES: usize = 100;

/// One rigid object in uniform translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectState {
    pub kind: ObjectKind,
    pub radius: f64,
    /// Center at frame 0, (h, w) pixels.
    pub center: [f64; 2],
    /// Displacement per frame, (h, w) pixels.
    pub velocity: [f64; 2],
    /// Peak brightness at the object center.
    pub intensity: f64,
}

impl ObjectState {
    /// Center position at frame `t`, before any wrapping.
    pub fn center_at(&self, t: usize) -> [f64; 2] {
        [
            self.center[0] + self.velocity[0] * t as f64,
            self.center[1] + self.velocity[1] * t as f64,
        ]
    }

    /// Distance from the center in the shape's own metric: Euclidean for
    /// discs, max-norm for squares, so `covers` is `distance <= radius`.
    fn shape_distance(&self, offset: [f64; 2]) -> f64 {
        match self.kind {
            ObjectKind::Disc => offset[0].hypot(offset[1]),
            ObjectKind::Square => offset[0].abs().max(offset[1].abs()),
        }
    }

    /// True where the object contributes any intensity, including the soft
    /// rim. Pixels here carry the object's velocity in the ground truth.
    fn covers(&self, offset: [f64; 2]) -> bool {
        self.shape_distance(offset) <= self.radius + EDGE_SOFTNESS / 2.0
    }

    /// Blend weight of the object over the background at the given offset:
    /// 1 in the interior, falling smoothly to 0 across the soft rim. The
    /// smoothstep profile keeps the blend differentiable at both rim edges.
    fn coverage(&self, offset: [f64; 2]) -> f64 {
        let d = self.shape_distance(offset);
        let x = ((self.radius + EDGE_SOFTNESS / 2.0 - d) / EDGE_SOFTNESS).clamp(0.0, 1.0);
        x * x * (3.0 - 2.0 * x)
    }

    /// Rendered brightness at the given offset from the center; full
    /// intensity at the center falling to `1 - RIM_SHADE` at the rim.
    fn shade(&self, offset: [f64; 2]) -> f64 {
        let x = (self.shape_distance(offset) / self.radius).min(1.0);
        self.intensity * (1.0 - RIM_SHADE * x * x)
    }

    /// Radius of the circle circumscribing the rendered footprint, soft rim
    /// included, used for overlap tests.
    fn circumradius(&self) -> f64 {
        let shape = match self.kind {
            ObjectKind::Disc => self.radius,
            ObjectKind::Square => self.radius * std::f64::consts::SQRT_2,
        };
        shape + EDGE_SOFTNESS / 2.0
    }
}

/// Offset from `center` to `point`, reduced to the nearest periodic image
/// when the scene wraps.
fn offset_from(point: [f64; 2], center: [f64; 2], height: f64, width: f64, wrap: bool) -> [f64; 2] {
    let mut dh = point[0] - center[0];
    let mut dw = point[1] - center[1];
    if wrap {
        dh -= height * (dh / height).round();
        dw -= width * (dw / width).round();
    }
    [dh, dw]
}

/// Exact motion record for one clip: enough to evaluate flow at any pixel
/// and trajectories for any query set.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub wrap_around: bool,
    pub objects: Vec<ObjectState>,
}

/// Exact trajectories for a set of query points.
#[derive(Debug, Clone)]
pub struct GtTracks {
    /// Positions in pixels, indexed `[t][m]`, components (h, w).
    pub positions: Vec<Vec<[f64; 2]>>,
    /// Whether the point is unoccluded and in frame, indexed `[t][m]`.
    pub visible: Vec<Vec<bool>>,
}

impl GroundTruth {
    /// Index of the object covering `point` at frame `t`, if any. Objects
    /// never overlap, so the first hit is the only one.
    pub fn covering_object(&self, t: usize, point: [f64; 2]) -> Option<usize> {
        let (h, w) = (self.height as f64, self.width as f64);
        self.objects.iter().position(|obj| {
            obj.covers(offset_from(point, obj.center_at(t), h, w, self.wrap_around))
        })
    }

    /// Per-pixel velocity between consecutive frames, evaluated at pixel
    /// centers: `(dh/dt, dw/dt)` tensors shaped `[T-1, H, W]`. Background
    /// pixels carry zero flow.
    pub fn flow(&self) -> (Tensor, Tensor) {
        let steps = self.frames - 1;
        let mut u = vec![0.0; steps * self.height * self.width];
        let mut v = vec![0.0; steps * self.height * self.width];
        for t in 0..steps {
            for h in 0..self.height {
                for w in 0..self.width {
                    let point = [h as f64 + 0.5, w as f64 + 0.5];
                    if let Some(i) = self.covering_object(t, point) {
                        let at = (t * self.height + h) * self.width + w;
                        u[at] = self.objects[i].velocity[0];
                        v[at] = self.objects[i].velocity[1];
                    }
                }
            }
        }
        let shape = [steps, self.height, self.width];
        (
            Tensor::from_vec(&shape, u).expect("shape matches construction"),
            Tensor::from_vec(&shape, v).expect("shape matches construction"),
        )
    }

    /// Trajectories of frame-0 query points. Points covered by an object
    /// move rigidly with it; background points stay put and become invisible
    /// while an object passes over them.
    pub fn tracks(&self, queries: &[[f64; 2]]) -> GtTracks {
        let (hf, wf) = (self.height as f64, self.width as f64);
        let mut positions = vec![Vec::with_capacity(queries.len()); self.frames];
        let mut visible = vec![Vec::with_capacity(queries.len()); self.frames];
        for &query in queries {
            match self.covering_object(0, query) {
                Some(i) => {
                    let obj = &self.objects[i];
                    let grip = [query[0] - obj.center[0], query[1] - obj.center[1]];
                    for t in 0..self.frames {
                        let center = obj.center_at(t);
                        let mut p = [center[0] + grip[0], center[1] + grip[1]];
                        let in_frame = if self.wrap_around {
                            p = [p[0].rem_euclid(hf), p[1].rem_euclid(wf)];
                            true
                        } else {
                            (0.0..hf).contains(&p[0]) && (0.0..wf).contains(&p[1])
                        };
                        positions[t].push(p);
                        visible[t].push(in_frame);
                    }
                }
                None => {
                    for t in 0..self.frames {
                        positions[t].push(query);
                        visible[t].push(self.covering_object(t, query).is_none());
                    }
                }
            }
        }
        GtTracks { positions, visible }
    }

    /// Mean speed of the flow field over all pixels and frame pairs.
    pub fn mean_flow_magnitude(&self) -> f64 {
        let (u, v) = self.flow();
        let n = u.numel() as f64;
        u.data()
            .iter()
            .zip(v.data())
            .map(|(&a, &b)| a.hypot(b))
            .sum::<f64>()
            / n
    }
}

/// Subpixel sample offsets for the 2x anti-aliasing grid.
const SUBSAMPLES: [[f64; 2]; 4] = [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]];

/// Renders a clip from explicit object states.
///
/// Every pixel averages a 2x2 grid of subsamples of the smooth coverage
/// profile, so shape boundaries are anti-aliased and subpixel motion changes
/// the image smoothly.
pub fn clip_from_objects(
    height: usize,
    width: usize,
    frames: usize,
    background: f64,
    wrap_around: bool,
    objects: &[ObjectState],
) -> Result<(Video, GroundTruth)> {
    let (hf, wf) = (height as f64, width as f64);
    let mut data = Vec::with_capacity(frames * height * width);
    for t in 0..frames {
        let centers: Vec<[f64; 2]> = objects.iter().map(|o| o.center_at(t)).collect();
        for h in 0..height {
            for w in 0..width {
                let mut acc = 0.0;
                for sub in SUBSAMPLES {
                    let point = [h as f64 + sub[0], w as f64 + sub[1]];
                    let mut value = background;
                    for (obj, &center) in objects.iter().zip(&centers) {
                        let offset = offset_from(point, center, hf, wf, wrap_around);
                        let cover = obj.coverage(offset);
                        if cover > 0.0 {
                            value += cover * (obj.shade(offset) - background);
                            break;
                        }
                    }
                    acc += value;
                }
                data.push(acc / SUBSAMPLES.len() as f64);
            }
        }
    }
    let video = Video::new(Tensor::from_vec(&[frames, height, width], data)?)?;
    let truth = GroundTruth {
        height,
        width,
        frames,
        wrap_around,
        objects: objects.to_vec(),
    };
    Ok((video, truth))
}

/// Samples a scene from `spec` and renders it. Deterministic per seed.
pub fn generate_clip(spec: &SceneSpec, seed: u64) -> Result<(Video, GroundTruth)> {
    spec.validate()?;
    generate_clip_with(spec, &mut derive_rng(seed, &[salt::SCENE]))
}

/// Like [`generate_clip`] but drawing from a caller-owned stream, so dataset
/// generation can hand each clip its own substream.
pub(crate) fn generate_clip_with(spec: &SceneSpec, rng: &mut RunRng) -> Result<(Video, GroundTruth)> {
    let objects = sample_objects(spec, rng)?;
    clip_from_objects(
        spec.height,
        spec.width,
        spec.frames,
        spec.background,
        spec.wrap_around,
        &objects,
    )
}

/// Rejection-samples object states so that no two objects come within
/// [`PLACEMENT_MARGIN`] of touching in any frame and, without wrap-around,
/// every object stays fully inside the frame for the whole clip.
fn sample_objects(spec: &SceneSpec, rng: &mut RunRng) -> Result<Vec<ObjectState>> {
    let mut placed: Vec<ObjectState> = Vec::with_capacity(spec.n_objects);
    for index in 0..spec.n_objects {
        let mut accepted = None;
        for _ in 0..PLACEMENT_RETRIES {
            let Some(candidate) = sample_candidate(spec, rng) else {
                continue;
            };
            let clear = placed.iter().all(|other| {
                let reach =
                    candidate.circumradius() + other.circumradius() + PLACEMENT_MARGIN;
                (0..spec.frames).all(|t| {
                    let offset = offset_from(
                        candidate.center_at(t),
                        other.center_at(t),
                        spec.height as f64,
                        spec.width as f64,
                        spec.wrap_around,
                    );
                    offset[0].hypot(offset[1]) >= reach
                })
            });
            if clear {
                accepted = Some(candidate);
                break;
            }
        }
        match accepted {
            Some(obj) => placed.push(obj),
            None => {
                return Err(Error::generation(format!(
                    "object {index} of {} could not be placed without overlap \
                     after {PLACEMENT_RETRIES} attempts",
                    spec.n_objects
                )))
            }
        }
    }
    Ok(placed)
}

/// Draws one candidate object. Returns `None` when the drawn radius and
/// velocity leave no in-frame starting position (only possible without
/// wrap-around); the caller counts that as a failed attempt.
fn sample_candidate(spec: &SceneSpec, rng: &mut RunRng) -> Option<ObjectState> {
    let kind = match spec.kinds {
        KindPolicy::Discs => ObjectKind::Disc,
        KindPolicy::Squares => ObjectKind::Square,
        KindPolicy::Mixed => {
            if rng.gen::<bool>() {
                ObjectKind::Disc
            } else {
                ObjectKind::Square
            }
        }
    };
    let radius = rng.gen_range(spec.radius_range.0..=spec.radius_range.1);
    let speed = rng.gen_range(spec.speed_range.0..=spec.speed_range.1);
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let velocity = [speed * angle.cos(), speed * angle.sin()];
    let intensity = rng.gen_range(spec.intensity_range.0..=spec.intensity_range.1);
    let center = if spec.wrap_around {
        [
            rng.gen_range(0.0..spec.height as f64),
            rng.gen_range(0.0..spec.width as f64),
        ]
    } else {
        let extent = radius + EDGE_SOFTNESS / 2.0 + 0.5;
        let drift = (spec.frames - 1) as f64;
        let lo_h = extent + (-velocity[0] * drift).max(0.0);
        let hi_h = spec.height as f64 - extent - (velocity[0] * drift).max(0.0);
        let lo_w = extent + (-velocity[1] * drift).max(0.0);
        let hi_w = spec.width as f64 - extent - (velocity[1] * drift).max(0.0);
        if lo_h > hi_h || lo_w > hi_w {
            return None;
        }
        [rng.gen_range(lo_h..=hi_h), rng.gen_range(lo_w..=hi_w)]
    };
    Some(ObjectState {
        kind,
        radius,
        center,
        velocity,
        intensity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::hash_f64_slice;

    fn lone_disc(velocity: [f64; 2], wrap: bool) -> (Video, GroundTruth) {
        let disc = ObjectState {
            kind: ObjectKind::Disc,
            radius: 4.0,
            center: [16.0, 9.0],
            velocity,
            intensity: 0.9,
        };
        clip_from_objects(32, 32, 6, 0.1, wrap, &[disc]).unwrap()
    }

    /// Bilinear sample of one frame at continuous pixel-center coordinates.
    fn sample(video: &Video, t: usize, p: [f64; 2], wrap: bool) -> f64 {
        let (h, w) = (video.h() as i64, video.w() as i64);
        let (gh, gw) = (p[0] - 0.5, p[1] - 0.5);
        let (h0, w0) = (gh.floor(), gw.floor());
        let (fh, fw) = (gh - h0, gw - w0);
        let mut acc = 0.0;
        for (dh, wh) in [(0, 1.0 - fh), (1, fh)] {
            for (dw, ww) in [(0, 1.0 - fw), (1, fw)] {
                let mut hh = h0 as i64 + dh;
                let mut ww2 = w0 as i64 + dw;
                if wrap {
                    hh = hh.rem_euclid(h);
                    ww2 = ww2.rem_euclid(w);
                } else {
                    hh = hh.clamp(0, h - 1);
                    ww2 = ww2.clamp(0, w - 1);
                }
                acc += wh * ww * video.pixel(t, hh as usize, ww2 as usize);
            }
        }
        acc
    }

    #[test]
    fn zero_velocity_freezes_the_scene() {
        let spec = SceneSpec {
            speed_range: (0.0, 0.0),
            ..SceneSpec::default()
        };
        let (video, truth) = generate_clip(&spec, 7).unwrap();
        for t in 1..video.t() {
            assert_eq!(video.frame(t), video.frame(0));
        }
        let (u, v) = truth.flow();
        assert!(u.data().iter().chain(v.data()).all(|&x| x == 0.0));
    }

    #[test]
    fn unit_speed_disc_matches_shifted_first_frame() {
        let (video, _) = lone_disc([0.0, 1.0], false);
        for k in 1..video.t() {
            let mut sq_err = 0.0;
            let mut n = 0usize;
            for h in 0..video.h() {
                for w in k..video.w() {
                    let d = video.pixel(k, h, w) - video.pixel(0, h, w - k);
                    sq_err += d * d;
                    n += 1;
                }
            }
            assert!(sq_err / (n as f64) < 1e-3, "frame {k} mse {}", sq_err / n as f64);
        }
    }

    #[test]
    fn same_seed_reproduces_the_clip() {
        let spec = SceneSpec::default();
        let (a, _) = generate_clip(&spec, 99).unwrap();
        let (b, _) = generate_clip(&spec, 99).unwrap();
        assert_eq!(
            hash_f64_slice(a.frames().data()),
            hash_f64_slice(b.frames().data())
        );
    }

    #[test]
    fn impossible_packing_reports_generation_error() {
        let spec = SceneSpec {
            n_objects: 12,
            radius_range: (5.0, 5.0),
            wrap_around: false,
            ..SceneSpec::default()
        };
        match generate_clip(&spec, 0) {
            Err(Error::Generation(_)) => {}
            other => panic!("expected generation error, got {other:?}"),
        }
    }

    #[test]
    fn flow_inside_a_rigid_object_equals_its_velocity() {
        let (_, truth) = lone_disc([0.25, -0.5], true);
        let (u, v) = truth.flow();
        let disc = &truth.objects[0];
        let mut checked = 0;
        for t in 0..truth.frames - 1 {
            let center = disc.center_at(t);
            for h in 0..truth.height {
                for w in 0..truth.width {
                    let p = [h as f64 + 0.5, w as f64 + 0.5];
                    let off = offset_from(p, center, 32.0, 32.0, true);
                    if disc.shape_distance(off) <= disc.radius - 1e-9 {
                        let at = (t * truth.height + h) * truth.width + w;
                        assert_eq!(u.data()[at], 0.25);
                        assert_eq!(v.data()[at], -0.5);
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 100, "too few interior pixels exercised: {checked}");
    }

    #[test]
    fn flow_advects_frames_onto_their_successors() {
        let (video, truth) = lone_disc([0.3, 0.7], true);
        let (u, v) = truth.flow();
        let disc = &truth.objects[0];
        let mut sq_err = 0.0;
        let mut n = 0usize;
        for t in 0..truth.frames - 1 {
            for h in 0..truth.height {
                for w in 0..truth.width {
                    let p = [h as f64 + 0.5, w as f64 + 0.5];
                    // Skip the anti-aliased boundary band in either frame.
                    let near_rim = [t, t + 1].iter().any(|&tt| {
                        let off = offset_from(p, disc.center_at(tt), 32.0, 32.0, true);
                        (disc.shape_distance(off) - disc.radius).abs() < 2.0
                    });
                    if near_rim {
                        continue;
                    }
                    let at = (t * truth.height + h) * truth.width + w;
                    let shifted = [p[0] + u.data()[at], p[1] + v.data()[at]];
                    let d = sample(&video, t + 1, shifted, true) - video.pixel(t, h, w);
                    sq_err += d * d;
                    n += 1;
                }
            }
        }
        assert!(n > 500);
        assert!(sq_err / (n as f64) < 1e-3, "advection mse {}", sq_err / n as f64);
    }

    #[test]
    fn tracks_ride_objects_and_see_occlusion() {
        let (_, truth) = lone_disc([0.0, 1.0], true);
        let tracks = truth.tracks(&[[16.0, 9.0], [4.0, 4.0], [16.0, 15.0]]);
        for t in 0..truth.frames {
            // Query 0 starts at the disc center and rides it.
            assert_eq!(tracks.positions[t][0], [16.0, 9.0 + t as f64]);
            assert!(tracks.visible[t][0]);
            // Query 1 is far background: fixed and always visible.
            assert_eq!(tracks.positions[t][1], [4.0, 4.0]);
            assert!(tracks.visible[t][1]);
        }
        // Query 2 sits 6 px right of the initial center; the disc footprint
        // (radius 4 plus the soft rim) overruns it from t=2 onward.
        assert!(tracks.visible[0][2]);
        assert!(tracks.visible[1][2]);
        assert!(!tracks.visible[2][2]);
        assert!(!tracks.visible[5][2]);
        assert_eq!(tracks.positions[5][2], [16.0, 15.0]);
    }

    #[test]
    fn wrap_around_conserves_object_mass() {
        let disc = ObjectState {
            kind: ObjectKind::Disc,
            radius: 4.0,
            center: [16.0, 28.0],
            velocity: [0.0, 1.3],
            intensity: 0.9,
        };
        let (video, _) = clip_from_objects(32, 32, 8, 0.1, true, &[disc]).unwrap();
        let mass = |t: usize| {
            video.frame(t).iter().map(|&x| x - 0.1).sum::<f64>()
        };
        let masses: Vec<f64> = (0..8).map(mass).collect();
        let (lo, hi) = masses
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &m| {
                (l.min(m), h.max(m))
            });
        assert!(hi - lo < 0.05 * hi, "mass range [{lo}, {hi}]");
    }

    #[test]
    fn squares_render_with_axis_aligned_extent() {
        let square = ObjectState {
            kind: ObjectKind::Square,
            radius: 3.0,
            center: [16.0, 16.0],
            velocity: [0.0, 0.0],
            intensity: 1.0,
        };
        let (video, _) = clip_from_objects(32, 32, 2, 0.0, false, &[square]).unwrap();
        // Fully covered pixel well inside.
        assert!(video.pixel(0, 16, 16) > 0.6);
        // Pixel centered 3.5 px from the center is fully outside.
        assert_eq!(video.pixel(0, 16, 20), 0.0);
        // Corner diagonal: a disc of the same radius would not cover (13, 13).
        assert!(video.pixel(0, 13, 13) > 0.0);
    }

    #[test]
    fn scene_spec_validation_rejects_untrackable_speeds() {
        let spec = SceneSpec {
            speed_range: (0.0, 3.0),
            ..SceneSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }
}
