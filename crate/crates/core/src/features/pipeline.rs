//! Bundles the flow and track pipelines into one configured extractor, so
//! reward models and evaluation score clips through identical settings.

use serde::{Deserialize, Serialize};

use crate::diffusion::Video;
use crate::error::{Error, Result};
use crate::features::flow::{
    estimate_flow_hs, imr_input, DEFAULT_FLOW_CONFIDENCE_SCALE, DEFAULT_FLOW_ITERATIONS,
    DEFAULT_FLOW_SMOOTHNESS,
};
use crate::features::tracks::{sample_queries, track_points_bm, QueryMode, TrackParams};
use crate::Tensor;

/// Default number of tracked query points per clip.
pub const DEFAULT_N_QUERIES: usize = 8;

/// Settings for turning raw clips into discriminator inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureExtractor {
    pub flow_smoothness: f64,
    pub flow_iterations: usize,
    pub flow_confidence_scale: f64,
    pub track: TrackParams,
    pub query_mode: QueryMode,
    pub n_queries: usize,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        FeatureExtractor {
            flow_smoothness: DEFAULT_FLOW_SMOOTHNESS,
            flow_iterations: DEFAULT_FLOW_ITERATIONS,
            flow_confidence_scale: DEFAULT_FLOW_CONFIDENCE_SCALE,
            track: TrackParams::default(),
            query_mode: QueryMode::Random,
            n_queries: DEFAULT_N_QUERIES,
        }
    }
}

impl FeatureExtractor {
    pub fn validate(&self) -> Result<()> {
        if self.n_queries == 0 {
            return Err(Error::config("n_queries must be at least 1"));
        }
        Ok(())
    }

    /// Estimated-flow residual stack `[T-1, 2, H, W]` for one clip.
    pub fn imr_features(&self, clip: &Video) -> Result<Tensor> {
        let flow = estimate_flow_hs(
            clip,
            self.flow_smoothness,
            self.flow_iterations,
            self.flow_confidence_scale,
        )?;
        imr_input(clip, &flow)
    }

    /// Tracked per-point feature rows `[M, 4T-2]` for one clip. The query
    /// layout is deterministic per seed.
    pub fn lmr_features(&self, clip: &Video, seed: u64) -> Result<Tensor> {
        let queries = sample_queries(self.query_mode, self.n_queries, clip.h(), clip.w(), seed)?;
        let descriptor = track_points_bm(clip, &queries, &self.track)?;
        Ok(descriptor.point_features())
    }
}
