//! Quality metrics for generated clips and the ablation experiment runner.
//!
//! * [`motion_magnitude`] — mean estimated flow speed, the dynamics metric.
//! * [`appearance_score`] — nearest-reference-frame fidelity, higher is
//!   better, 1 means frames indistinguishable from the reference set.
//! * [`frechet_feature_distance`] — Fréchet distance between Gaussians
//!   fitted to [`clip_features`] rows, the distributional metric.
//! * [`motion_appearance_gap`] — standardized divergence between the two
//!   trajectories of a run, the reward-hacking diagnostic.

mod frechet;
mod gap;
mod metrics;

pub use frechet::{frechet_feature_distance, frechet_from_stats};
pub use gap::motion_appearance_gap;
pub use metrics::{
    appearance_score, clip_features, feature_matrix, motion_magnitude, CLIP_FEATURE_DIM,
};
