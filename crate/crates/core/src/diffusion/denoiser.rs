//! Noise-prediction networks: the trainable conv denoiser and an analytic
//! oracle used by sampler tests.

use rand::Rng;

use crate::diffusion::schedule::Schedule;
use crate::error::{Error, Result};
use crate::ndgrad::checkpoint::Checkpoint;
use crate::ndgrad::graph::NodeId;
use crate::ndgrad::layers::ConvLayer;
use crate::{Graph, ParamStore, Real, Tensor};

/// Value-level noise prediction, all a sampler needs.
pub trait NoisePredictor {
    fn predict_noise(&self, x_t: &Tensor, t: usize) -> Result<Tensor>;
}

/// Graph-level noise prediction, what loss construction needs. The returned
/// node must depend on any trainable parameters through the graph.
pub trait GraphNoisePredictor {
    fn predict_noise_graph(&self, g: &mut Graph, x_t: &Tensor, t: usize) -> Result<NodeId>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserConfig {
    pub frames: usize,
    pub hidden_channels: usize,
    pub conv_layers: usize,
    pub kernel: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            frames: 8,
            hidden_channels: 16,
            conv_layers: 3,
            kernel: 3,
        }
    }
}

impl DenoiserConfig {
    fn validate(&self) -> Result<()> {
        if self.frames < 2 || self.hidden_channels == 0 || self.conv_layers < 2 {
            return Err(Error::config(format!(
                "denoiser needs >= 2 frames, >= 2 conv layers, and nonzero width, got {self:?}"
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::config(format!(
                "denoiser kernel size must be odd, got {}",
                self.kernel
            )));
        }
        Ok(())
    }
}

/// Small convolutional noise predictor. The clip's frames enter as input
/// channels together with one constant timestep channel holding `t / T`;
/// the output has one channel per frame, same spatial size.
#[derive(Debug)]
pub struct ConvDenoiser {
    cfg: DenoiserConfig,
    t_max: usize,
    store: ParamStore,
    layers: Vec<ConvLayer>,
}

impl ConvDenoiser {
    pub fn new<R: Rng + ?Sized>(cfg: DenoiserConfig, t_max: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let pad = cfg.kernel / 2;
        let mut layers = Vec::with_capacity(cfg.conv_layers);
        for i in 0..cfg.conv_layers {
            let in_ch = if i == 0 { cfg.frames + 1 } else { cfg.hidden_channels };
            let out_ch = if i == cfg.conv_layers - 1 {
                cfg.frames
            } else {
                cfg.hidden_channels
            };
            layers.push(ConvLayer::new(
                &mut store,
                &format!("conv{i}"),
                in_ch,
                out_ch,
                cfg.kernel,
                pad,
                rng,
            ));
        }
        Ok(ConvDenoiser {
            cfg,
            t_max,
            store,
            layers,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn stacked_input(&self, x_t: &Tensor, t: usize) -> Result<Tensor> {
        let shape = x_t.shape();
        if shape.len() != 3 || shape[0] != self.cfg.frames {
            return Err(Error::dim(format!(
                "denoiser expects [{} x H x W], got {shape:?}",
                self.cfg.frames
            )));
        }
        if t == 0 || t > self.t_max {
            return Err(Error::contract(format!(
                "timestep {t} outside 1..={}",
                self.t_max
            )));
        }
        let (h, w) = (shape[1], shape[2]);
        let mut data = Vec::with_capacity((self.cfg.frames + 1) * h * w);
        data.extend_from_slice(x_t.data());
        data.resize((self.cfg.frames + 1) * h * w, t as Real / self.t_max as Real);
        Tensor::from_vec(&[self.cfg.frames + 1, h, w], data)
    }

    pub fn save_into(&self, ckpt: &mut Checkpoint) {
        let meta = vec![
            self.cfg.frames as f64,
            self.cfg.hidden_channels as f64,
            self.cfg.conv_layers as f64,
            self.cfg.kernel as f64,
            self.t_max as f64,
        ];
        let n = meta.len();
        ckpt.insert(
            "denoiser/meta",
            Tensor::from_vec(&[n], meta).expect("meta length matches its own shape"),
        );
        ckpt.insert_store("denoiser", &self.store);
    }

    pub fn load_from(ckpt: &Checkpoint) -> Result<Self> {
        let meta = ckpt
            .get("denoiser/meta")
            .ok_or_else(|| Error::contract("checkpoint has no denoiser/meta entry"))?;
        let m = meta.data();
        if m.len() != 5 {
            return Err(Error::contract("denoiser/meta entry has wrong length"));
        }
        let cfg = DenoiserConfig {
            frames: m[0] as usize,
            hidden_channels: m[1] as usize,
            conv_layers: m[2] as usize,
            kernel: m[3] as usize,
        };
        let mut den = ConvDenoiser::new(cfg, m[4] as usize, &mut crate::rng::derive_rng(0, &[]))?;
        ckpt.load_store("denoiser", &mut den.store)?;
        Ok(den)
    }
}

impl GraphNoisePredictor for ConvDenoiser {
    fn predict_noise_graph(&self, g: &mut Graph, x_t: &Tensor, t: usize) -> Result<NodeId> {
        let input = g.leaf(self.stacked_input(x_t, t)?);
        let mut h = input;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, &self.store, h)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

impl NoisePredictor for ConvDenoiser {
    fn predict_noise(&self, x_t: &Tensor, t: usize) -> Result<Tensor> {
        let mut g = Graph::new();
        let out = self.predict_noise_graph(&mut g, x_t, t)?;
        Ok(g.value(out).clone())
    }
}

/// Analytic noise oracle for a dataset holding exactly one clip: given the
/// forward-process state of that clip, returns the noise that produced it.
#[derive(Debug, Clone)]
pub struct PerfectDenoiser {
    x0: Tensor,
    sched: Schedule<Real>,
}

impl PerfectDenoiser {
    pub fn new(x0: Tensor, sched: Schedule<Real>) -> Self {
        PerfectDenoiser { x0, sched }
    }
}

impl NoisePredictor for PerfectDenoiser {
    fn predict_noise(&self, x_t: &Tensor, t: usize) -> Result<Tensor> {
        if x_t.shape() != self.x0.shape() {
            return Err(Error::dim(format!(
                "oracle expects shape {:?}, got {:?}",
                self.x0.shape(),
                x_t.shape()
            )));
        }
        let ab = self.sched.alpha_bar(t);
        let scale = 1.0 / (1.0 - ab).sqrt();
        let data = x_t
            .data()
            .iter()
            .zip(self.x0.data())
            .map(|(&xt, &x0)| (xt - ab.sqrt() * x0) * scale)
            .collect();
        Tensor::from_vec(x_t.shape(), data)
    }
}

impl GraphNoisePredictor for PerfectDenoiser {
    fn predict_noise_graph(&self, g: &mut Graph, x_t: &Tensor, t: usize) -> Result<NodeId> {
        Ok(g.leaf(self.predict_noise(x_t, t)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;

    #[test]
    fn output_shape_equals_input_shape() {
        let mut rng = derive_rng(1, &[]);
        let cfg = DenoiserConfig {
            frames: 4,
            hidden_channels: 6,
            conv_layers: 3,
            kernel: 3,
        };
        let den = ConvDenoiser::new(cfg, 50, &mut rng).unwrap();
        let x = Tensor::randn(&[4, 8, 8], 1.0, &mut rng);
        let out = den.predict_noise(&x, 25).unwrap();
        assert_eq!(out.shape(), x.shape());
    }

    #[test]
    fn prediction_is_deterministic() {
        let mut rng = derive_rng(2, &[]);
        let den = ConvDenoiser::new(
            DenoiserConfig {
                frames: 2,
                hidden_channels: 4,
                conv_layers: 2,
                kernel: 3,
            },
            10,
            &mut rng,
        )
        .unwrap();
        let x = Tensor::randn(&[2, 6, 6], 1.0, &mut rng);
        let a = den.predict_noise(&x, 3).unwrap();
        let b = den.predict_noise(&x, 3).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn timestep_channel_changes_the_output() {
        let mut rng = derive_rng(3, &[]);
        let den = ConvDenoiser::new(
            DenoiserConfig {
                frames: 2,
                hidden_channels: 4,
                conv_layers: 2,
                kernel: 3,
            },
            10,
            &mut rng,
        )
        .unwrap();
        let x = Tensor::randn(&[2, 6, 6], 1.0, &mut rng);
        let a = den.predict_noise(&x, 1).unwrap();
        let b = den.predict_noise(&x, 10).unwrap();
        assert_ne!(a.data(), b.data());
    }

    #[test]
    fn rejects_out_of_range_timesteps() {
        let mut rng = derive_rng(4, &[]);
        let den = ConvDenoiser::new(
            DenoiserConfig {
                frames: 2,
                hidden_channels: 4,
                conv_layers: 2,
                kernel: 3,
            },
            10,
            &mut rng,
        )
        .unwrap();
        let x = Tensor::zeros(&[2, 6, 6]);
        assert!(den.predict_noise(&x, 0).is_err());
        assert!(den.predict_noise(&x, 11).is_err());
    }

    #[test]
    fn checkpoint_round_trip_reproduces_predictions() {
        let mut rng = derive_rng(5, &[]);
        let den = ConvDenoiser::new(
            DenoiserConfig {
                frames: 3,
                hidden_channels: 5,
                conv_layers: 3,
                kernel: 3,
            },
            20,
            &mut rng,
        )
        .unwrap();
        let mut ckpt = Checkpoint::new();
        den.save_into(&mut ckpt);
        let loaded = ConvDenoiser::load_from(&ckpt).unwrap();
        let x = Tensor::randn(&[3, 7, 7], 1.0, &mut rng);
        assert_eq!(
            den.predict_noise(&x, 7).unwrap().data(),
            loaded.predict_noise(&x, 7).unwrap().data()
        );
    }

    #[test]
    fn perfect_denoiser_inverts_the_forward_process() {
        let mut rng = derive_rng(6, &[]);
        let sched: Schedule<Real> = Schedule::linear(50, 1e-3, 0.1).unwrap();
        let x0 = Tensor::randn(&[2, 4, 4], 1.0, &mut rng);
        let eps = Tensor::randn(&[2, 4, 4], 1.0, &mut rng);
        let t = 30;
        let ab = sched.alpha_bar(t);
        let xt_data: Vec<f64> = x0
            .data()
            .iter()
            .zip(eps.data())
            .map(|(&x, &e)| ab.sqrt() * x + (1.0 - ab).sqrt() * e)
            .collect();
        let xt = Tensor::from_vec(&[2, 4, 4], xt_data).unwrap();
        let oracle = PerfectDenoiser::new(x0, sched);
        let pred = oracle.predict_noise(&xt, t).unwrap();
        for (p, e) in pred.data().iter().zip(eps.data()) {
            assert!((p - e).abs() < 1e-12);
        }
    }
}
