//! Motion representations extracted from clips: dense flow with a transport
//! residual for the instantaneous discriminator, and sparse point tracks
//! with drift/visibility/confidence series for the long-term one.
//!
//! Both estimators (Horn-Schunck flow, block-matching tracks) have exact
//! ground-truth passthroughs, so experiments can separate estimator noise
//! from reward-model behavior.

mod flow;
mod grad;
mod pipeline;
mod tracks;

pub use flow::{
    estimate_flow_hs, flow_from_gt, imr_input, transport_residual, FlowField, ResidualMap,
    DEFAULT_FLOW_CONFIDENCE_SCALE, DEFAULT_FLOW_ITERATIONS, DEFAULT_FLOW_SMOOTHNESS,
};
pub use grad::{sobel_gradients, temporal_derivative};
pub use pipeline::{FeatureExtractor, DEFAULT_N_QUERIES};
pub use tracks::{
    sample_queries, track_points_bm, tracks_from_gt, QueryMode, TrackParams,
    TrajectoryDescriptor, DEFAULT_GAP_SCALE, DEFAULT_SSD_SCALE, DEFAULT_TRACK_SEARCH,
    DEFAULT_TRACK_WINDOW, DEFAULT_VISIBILITY_THRESHOLD,
};
