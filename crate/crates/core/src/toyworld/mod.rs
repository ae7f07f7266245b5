//! Synthetic video world: rigid discs and squares in uniform translation
//! over a flat background, rendered with anti-aliasing and exact motion
//! ground truth (per-pixel flow, point tracks, visibility).
//!
//! Clips are deterministic functions of a spec and a seed, so whole datasets
//! regenerate from a run config. The static-bias transform freezes a random
//! subset of clips to their first frame, producing the degraded fine-tuning
//! set that drags sampled motion down under plain supervised training.

mod dataset;
mod scene;

pub use dataset::{
    export_pgm_frames, load_dataset, make_dataset, save_dataset, static_bias, write_pgm, Clip,
    Dataset,
};
pub use scene::{
    clip_from_objects, generate_clip, GroundTruth, GtTracks, KindPolicy, ObjectKind, ObjectState,
    SceneSpec,
};
