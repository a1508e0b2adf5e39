//! Adam-driven Gaussian reconstruction with opacity pruning.

mod adam;
mod recon;

pub use adam::{adam_step, AdamParams, AdamState, GaussianAdam, LearningRates};
pub use recon::{
    init_gaussians, mean_nearest_distance, optimize, prune, reconstruct, reconstruct_with, scene_extent, smooth,
    write_trace_csv, LossRecord, ReconConfig, ReconResult, INIT_COLOR, INIT_OPACITY,
};
