//! The two motion discriminators: a small conv net over transport-residual
//! stacks and a permutation-invariant point-set encoder over track features.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ndgrad::graph::NodeId;
use crate::ndgrad::layers::{ConvLayer, LinearLayer};
use crate::{Graph, ParamStore, Tensor};

/// Hidden channel count of the residual-stack conv encoder.
const IMR_CHANNELS: usize = 8;

/// Hidden width of the per-point track encoder.
const LMR_HIDDEN: usize = 32;

/// A model scoring one feature tensor with a single logit. Implementations
/// wire their forward pass onto a caller-owned graph so training can
/// backpropagate through batches of logits.
pub trait Discriminator {
    /// Wires the forward pass for one sample and returns a `[1]`-shaped
    /// logit node.
    fn logit_node(&self, g: &mut Graph, store: &ParamStore, features: &Tensor) -> Result<NodeId>;

    /// Scores one sample without keeping the graph.
    fn score(&self, store: &ParamStore, features: &Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let node = self.logit_node(&mut g, store, features)?;
        Ok(g.value(node).data()[0])
    }
}

/// Conv discriminator over `[T-1, 2, H, W]` residual-and-confidence stacks.
/// Frame pairs and channels fold into one channel axis; global average
/// pooling and a zero-initialized head produce the logit.
#[derive(Debug, Clone)]
pub struct ImrDiscriminator {
    conv1: ConvLayer,
    conv2: ConvLayer,
    head: LinearLayer,
    frame_pairs: usize,
}

impl ImrDiscriminator {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        frame_pairs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if frame_pairs == 0 {
            return Err(Error::config("imr discriminator needs at least one frame pair"));
        }
        let conv1 = ConvLayer::new(store, "conv1", 2 * frame_pairs, IMR_CHANNELS, 3, 1, rng);
        let conv2 = ConvLayer::new(store, "conv2", IMR_CHANNELS, IMR_CHANNELS, 3, 1, rng);
        let head = LinearLayer::zeroed(store, "head", IMR_CHANNELS, 1);
        Ok(ImrDiscriminator {
            conv1,
            conv2,
            head,
            frame_pairs,
        })
    }

    pub fn frame_pairs(&self) -> usize {
        self.frame_pairs
    }

    /// Reconstructs the architecture from a store holding its parameters,
    /// reading the frame-pair count back from the first conv kernel.
    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let take = |name: &str| {
            store
                .id_of(name)
                .ok_or_else(|| Error::contract(format!("imr store is missing {name}")))
        };
        let conv1_weight = take("conv1.weight")?;
        let in_ch = store.get(conv1_weight).shape()[1];
        if in_ch % 2 != 0 || in_ch == 0 {
            return Err(Error::contract(format!(
                "imr conv1 expects an even channel count, got {in_ch}"
            )));
        }
        Ok(ImrDiscriminator {
            conv1: ConvLayer {
                weight: conv1_weight,
                bias: take("conv1.bias")?,
                out_ch: IMR_CHANNELS,
                padding: 1,
            },
            conv2: ConvLayer {
                weight: take("conv2.weight")?,
                bias: take("conv2.bias")?,
                out_ch: IMR_CHANNELS,
                padding: 1,
            },
            head: LinearLayer {
                weight: take("head.weight")?,
                bias: take("head.bias")?,
            },
            frame_pairs: in_ch / 2,
        })
    }

    /// Detached copy of the parameters plus a handle bound to that copy.
    /// Used for the slow-moving shadow that scores rollouts.
    pub fn shadow(&self, live: &ParamStore) -> Result<(ParamStore, Self)> {
        let store = live.clone_detached();
        let disc = Self::from_store(&store)?;
        Ok((store, disc))
    }
}

impl Discriminator for ImrDiscriminator {
    fn logit_node(&self, g: &mut Graph, store: &ParamStore, features: &Tensor) -> Result<NodeId> {
        let shape = features.shape();
        if shape.len() != 4 || shape[0] != self.frame_pairs || shape[1] != 2 {
            return Err(Error::dim(format!(
                "imr input must be [{} x 2 x H x W], got {shape:?}",
                self.frame_pairs
            )));
        }
        let (h, w) = (shape[2], shape[3]);
        let x = g.leaf(features.clone());
        let stacked = g.reshape(x, &[2 * self.frame_pairs, h, w])?;
        let c1 = self.conv1.forward(g, store, stacked)?;
        let a1 = g.relu(c1);
        let c2 = self.conv2.forward(g, store, a1)?;
        let a2 = g.relu(c2);
        let flat = g.reshape(a2, &[IMR_CHANNELS, h * w])?;
        let pooled = g.mean_axis1(flat)?;
        let row = g.reshape(pooled, &[1, IMR_CHANNELS])?;
        let logit = self.head.forward(g, store, row)?;
        g.reshape(logit, &[1])
    }
}

/// Point-set discriminator over `[M, 4T-2]` per-point track features. A
/// shared two-layer encoder runs per point; mean pooling over points keeps
/// the logit exactly permutation invariant.
#[derive(Debug, Clone)]
pub struct LmrDiscriminator {
    enc1: LinearLayer,
    enc2: LinearLayer,
    head: LinearLayer,
    input_dim: usize,
}

impl LmrDiscriminator {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, frames: usize, rng: &mut R) -> Result<Self> {
        if frames < 2 {
            return Err(Error::config("lmr discriminator needs at least two frames"));
        }
        let input_dim = 4 * frames - 2;
        let enc1 = LinearLayer::new(store, "enc1", input_dim, LMR_HIDDEN, rng);
        let enc2 = LinearLayer::new(store, "enc2", LMR_HIDDEN, LMR_HIDDEN, rng);
        let head = LinearLayer::zeroed(store, "head", LMR_HIDDEN, 1);
        Ok(LmrDiscriminator {
            enc1,
            enc2,
            head,
            input_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Reconstructs the architecture from a store holding its parameters,
    /// reading the input width back from the first encoder layer.
    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let take = |name: &str| {
            store
                .id_of(name)
                .ok_or_else(|| Error::contract(format!("lmr store is missing {name}")))
        };
        let enc1_weight = take("enc1.weight")?;
        let input_dim = store.get(enc1_weight).shape()[0];
        Ok(LmrDiscriminator {
            enc1: LinearLayer {
                weight: enc1_weight,
                bias: take("enc1.bias")?,
            },
            enc2: LinearLayer {
                weight: take("enc2.weight")?,
                bias: take("enc2.bias")?,
            },
            head: LinearLayer {
                weight: take("head.weight")?,
                bias: take("head.bias")?,
            },
            input_dim,
        })
    }

    /// Detached copy of the parameters plus a handle bound to that copy.
    pub fn shadow(&self, live: &ParamStore) -> Result<(ParamStore, Self)> {
        let store = live.clone_detached();
        let disc = Self::from_store(&store)?;
        Ok((store, disc))
    }
}

impl Discriminator for LmrDiscriminator {
    fn logit_node(&self, g: &mut Graph, store: &ParamStore, features: &Tensor) -> Result<NodeId> {
        let shape = features.shape();
        if shape.len() != 2 || shape[1] != self.input_dim || shape[0] == 0 {
            return Err(Error::dim(format!(
                "lmr input must be [M x {}] with M >= 1, got {shape:?}",
                self.input_dim
            )));
        }
        let x = g.leaf(features.clone());
        let e1 = self.enc1.forward(g, store, x)?;
        let a1 = g.relu(e1);
        let e2 = self.enc2.forward(g, store, a1)?;
        let a2 = g.relu(e2);
        let pooled = g.mean_axis0(a2)?;
        let row = g.reshape(pooled, &[1, LMR_HIDDEN])?;
        let logit = self.head.forward(g, store, row)?;
        g.reshape(logit, &[1])
    }
}
