//! Finite-difference image derivatives shared by the motion features.

use crate::diffusion::Video;
use crate::error::{Error, Result};
use crate::Tensor;

/// Applies 3x3 Sobel kernels normalized by 1/8, so a unit intensity ramp
/// yields a unit gradient. `wrap` selects periodic instead of replicate
/// border handling.
pub(crate) fn sobel_raw(frame: &[f64], height: usize, width: usize, wrap: bool) -> (Vec<f64>, Vec<f64>) {
    let mut d_dh = vec![0.0; height * width];
    let mut d_dw = vec![0.0; height * width];
    let resolve = |x: i64, n: usize| -> usize {
        if wrap {
            x.rem_euclid(n as i64) as usize
        } else {
            x.clamp(0, n as i64 - 1) as usize
        }
    };
    // Each gradient is a difference of two smoothed line sums. Computing the
    // sums first lets equal lines cancel bitwise, so flat regions come out
    // exactly zero.
    let row_sum = |h: usize, w: usize, dh: i64| -> f64 {
        let base = resolve(h as i64 + dh, height) * width;
        let mut acc = 0.0;
        for dw in -1i64..=1 {
            acc += (2 - dw.abs()) as f64 * frame[base + resolve(w as i64 + dw, width)];
        }
        acc
    };
    let col_sum = |h: usize, w: usize, dw: i64| -> f64 {
        let col = resolve(w as i64 + dw, width);
        let mut acc = 0.0;
        for dh in -1i64..=1 {
            acc += (2 - dh.abs()) as f64 * frame[resolve(h as i64 + dh, height) * width + col];
        }
        acc
    };
    for h in 0..height {
        for w in 0..width {
            d_dh[h * width + w] = (row_sum(h, w, 1) - row_sum(h, w, -1)) / 8.0;
            d_dw[h * width + w] = (col_sum(h, w, 1) - col_sum(h, w, -1)) / 8.0;
        }
    }
    (d_dh, d_dw)
}

/// Spatial intensity gradients of one frame: `(dI/dh, dI/dw)`, each shaped
/// `[H, W]`, with replicate-padded borders.
pub fn sobel_gradients(frame: &Tensor) -> Result<(Tensor, Tensor)> {
    let shape = frame.shape();
    if shape.len() != 2 {
        return Err(Error::dim(format!(
            "sobel_gradients expects a [H, W] frame, got shape {shape:?}"
        )));
    }
    let (height, width) = (shape[0], shape[1]);
    if height < 3 || width < 3 {
        return Err(Error::dim(format!(
            "sobel_gradients needs at least a 3x3 frame, got {height}x{width}"
        )));
    }
    let (d_dh, d_dw) = sobel_raw(frame.data(), height, width, false);
    Ok((
        Tensor::from_vec(shape, d_dh)?,
        Tensor::from_vec(shape, d_dw)?,
    ))
}

/// Frame-to-frame intensity change `dI/dt[t] = frame[t+1] - frame[t]`,
/// shaped `[T-1, H, W]`.
pub fn temporal_derivative(clip: &Video) -> Tensor {
    let (t, h, w) = (clip.t(), clip.h(), clip.w());
    let mut data = Vec::with_capacity((t - 1) * h * w);
    for step in 0..t - 1 {
        let prev = clip.frame(step);
        let next = clip.frame(step + 1);
        data.extend(prev.iter().zip(next).map(|(&a, &b)| b - a));
    }
    Tensor::from_vec(&[t - 1, h, w], data).expect("shape matches construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyworld::{clip_from_objects, ObjectKind, ObjectState};

    #[test]
    fn constant_frame_has_zero_gradients() {
        let frame = Tensor::filled(&[5, 6], 0.7);
        let (gh, gw) = sobel_gradients(&frame).unwrap();
        assert!(gh.data().iter().chain(gw.data()).all(|&x| x == 0.0));
    }

    #[test]
    fn horizontal_ramp_has_unit_dw_in_the_interior() {
        let frame = Tensor::from_vec(
            &[5, 7],
            (0..5).flat_map(|_| (0..7).map(|w| w as f64)).collect(),
        )
        .unwrap();
        let (gh, gw) = sobel_gradients(&frame).unwrap();
        for h in 0..5 {
            for w in 1..6 {
                assert_eq!(gw.data()[frame.idx2(h, w)], 1.0);
                assert_eq!(gh.data()[frame.idx2(h, w)], 0.0);
            }
        }
    }

    #[test]
    fn vertical_ramp_has_unit_dh_in_the_interior() {
        let frame = Tensor::from_vec(
            &[6, 5],
            (0..6).flat_map(|h| (0..5).map(move |_| h as f64)).collect(),
        )
        .unwrap();
        let (gh, gw) = sobel_gradients(&frame).unwrap();
        for h in 1..5 {
            for w in 0..5 {
                assert_eq!(gh.data()[frame.idx2(h, w)], 1.0);
                assert_eq!(gw.data()[frame.idx2(h, w)], 0.0);
            }
        }
    }

    #[test]
    fn tiny_frames_are_rejected() {
        let frame = Tensor::filled(&[2, 5], 0.0);
        assert!(matches!(sobel_gradients(&frame), Err(Error::Dim(_))));
    }

    #[test]
    fn temporal_derivative_is_exact_frame_difference() {
        let disc = ObjectState {
            kind: ObjectKind::Disc,
            radius: 3.0,
            center: [8.0, 8.0],
            velocity: [0.5, -0.25],
            intensity: 0.9,
        };
        let (video, _) = clip_from_objects(16, 16, 4, 0.1, true, &[disc]).unwrap();
        let dt = temporal_derivative(&video);
        assert_eq!(dt.shape(), &[3, 16, 16]);
        for t in 0..3 {
            for i in 0..256 {
                let expect = video.frame(t + 1)[i] - video.frame(t)[i];
                assert_eq!(dt.data()[t * 256 + i], expect);
            }
        }
    }

    #[test]
    fn static_clip_has_zero_temporal_derivative() {
        let frames = Tensor::filled(&[3, 4, 4], 0.3);
        let video = Video::new(frames).unwrap();
        assert!(temporal_derivative(&video).data().iter().all(|&x| x == 0.0));
    }
}
