//! Clip container shared by the whole pipeline.

use crate::error::{Error, Result};
use crate::Tensor;

/// A grayscale clip `[T, H, W]`. Clean data lies nominally in `[0, 1]`;
/// noised diffusion states are unbounded. At least two frames are required
/// so temporal derivatives exist.
#[derive(Debug, Clone, PartialEq)]
pub struct Video(Tensor);

impl Video {
    pub fn new(frames: Tensor) -> Result<Self> {
        let shape = frames.shape();
        if shape.len() != 3 {
            return Err(Error::dim(format!(
                "a clip must be [T, H, W], got {shape:?}"
            )));
        }
        if shape[0] < 2 {
            return Err(Error::contract(format!(
                "a clip needs at least 2 frames, got {}",
                shape[0]
            )));
        }
        Ok(Video(frames))
    }

    pub fn frames(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn t(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn h(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn w(&self) -> usize {
        self.0.shape()[2]
    }

    /// Borrow of frame `t` as a flat `H*W` slice.
    pub fn frame(&self, t: usize) -> &[f64] {
        let hw = self.h() * self.w();
        &self.0.data()[t * hw..(t + 1) * hw]
    }

    pub fn pixel(&self, t: usize, h: usize, w: usize) -> f64 {
        self.0.data()[(t * self.h() + h) * self.w() + w]
    }
}
