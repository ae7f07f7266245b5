//! Conv and linear layers: parameter registration plus forward graph wiring.

use rand::Rng;

use crate::error::Result;
use crate::ndgrad::graph::{Graph, NodeId};
use crate::ndgrad::store::{ParamId, ParamStore};
use crate::ndgrad::tensor::Tensor;
use crate::scalar::Scalar;

/// 2d convolution layer (stride 1, zero padding) with a per-channel bias.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub out_ch: usize,
    pub padding: usize,
}

impl ConvLayer {
    /// Registers He-initialized weights `[out_ch, in_ch, k, k]` and zero
    /// biases `[out_ch]` under `{name}.weight` / `{name}.bias`.
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let std = S::of((2.0 / fan_in as f64).sqrt());
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::randn(&[out_ch, in_ch, kernel, kernel], std, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_ch]));
        ConvLayer {
            weight,
            bias,
            out_ch,
            padding,
        }
    }

    /// Applies the convolution to a `[C, H, W]` input.
    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: NodeId,
    ) -> Result<NodeId> {
        let w = g.param(self.weight, store.get(self.weight));
        let b = g.param(self.bias, store.get(self.bias));
        let y = g.conv2d(x, w, self.padding)?;
        let shape = g.value(y).shape().to_vec();
        let flat = g.reshape(y, &[self.out_ch, shape[1] * shape[2]])?;
        let biased = g.add_col_vector(flat, b)?;
        g.reshape(biased, &shape)
    }
}

/// Dense layer `y = x W + b` acting on `[n, in_dim]` batches.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl LinearLayer {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let std = S::of((2.0 / in_dim as f64).sqrt());
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::randn(&[in_dim, out_dim], std, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        LinearLayer { weight, bias }
    }

    /// Registers an all-zero layer. Used for output heads that must start
    /// at exactly zero.
    pub fn zeroed<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), Tensor::zeros(&[in_dim, out_dim]));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        LinearLayer { weight, bias }
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: NodeId,
    ) -> Result<NodeId> {
        let w = g.param(self.weight, store.get(self.weight));
        let b = g.param(self.bias, store.get(self.bias));
        let y = g.matmul(x, w)?;
        g.add_row_vector(y, b)
    }
}
