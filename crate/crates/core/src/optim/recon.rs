use std::io::Write;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{AdamParams, GaussianAdam, LearningRates};
use crate::error::{Error, Result};
use crate::eval::PointGrid;
use crate::grid::PointSet;
use crate::image::{Rgb, WHITE};
use crate::loss::{recon_loss_with, LossWeights, Perceptual, StructuralProxy};
use crate::splat::{backward_from, logit, rasterize, Gaussian, GaussianSet};
use crate::synth::ViewSet;

pub const INIT_OPACITY: f64 = 0.1;
pub const INIT_COLOR: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub iterations: usize,
    pub learning_rates: LearningRates,
    pub adam: AdamParams,
    /// Pruning runs after every `prune_interval` iterations; 0 disables it.
    pub prune_interval: usize,
    pub prune_opacity_threshold: f64,
    pub loss: LossWeights,
    pub background: Rgb,
    /// Recorded with the run; the optimizer itself draws no random numbers.
    pub seed: u64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rates: LearningRates::default(),
            adam: AdamParams::default(),
            prune_interval: 500,
            prune_opacity_threshold: 0.05,
            loss: LossWeights::default(),
            background: WHITE,
            seed: 0,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        self.learning_rates.validate()?;
        self.adam.validate()?;
        self.loss.validate()?;
        if !(self.prune_opacity_threshold > 0.0 && self.prune_opacity_threshold < 1.0) {
            return Err(Error::config("prune_opacity_threshold must lie in (0, 1)"));
        }
        if !self.background.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::config("background must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub mse: f64,
    pub dssim: f64,
    pub perceptual: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconResult {
    pub gaussians: GaussianSet,
    pub trace: Vec<LossRecord>,
}

/// Mean distance from each point to its nearest neighbor.
pub fn mean_nearest_distance(points: &PointSet) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let grid = PointGrid::new(&points.points);
    let d: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| grid.nearest_other_dist2(i).sqrt())
        .collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Radius of the smallest centroid-centered ball holding every point.
pub fn scene_extent(points: &PointSet) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let centroid = points.points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / points.len() as f64;
    points
        .points
        .iter()
        .map(|p| (p.coords - centroid).norm())
        .fold(0.0, f64::max)
}

/// Isotropic mid-gray Gaussians at the given points.
pub fn init_gaussians(points: &PointSet) -> Result<GaussianSet> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    points.validate()?;
    let mut scale = mean_nearest_distance(points);
    if !(scale > 0.0) {
        // single or coincident points: fall back to a small fraction of the unit box
        scale = 1e-2;
    }
    let mut gs = GaussianSet::new();
    for p in &points.points {
        gs.push(&Gaussian {
            position: p.coords,
            log_scale: Vector3::repeat(scale.ln()),
            rotation: nalgebra::Vector4::new(1.0, 0.0, 0.0, 0.0),
            opacity_logit: logit(INIT_OPACITY),
            color: Vector3::repeat(INIT_COLOR),
        });
    }
    Ok(gs)
}

/// Keeps exactly the Gaussians with opacity at or above `threshold`.
pub fn prune(gs: &GaussianSet, threshold: f64) -> GaussianSet {
    gs.retain_indices(&prune_mask(gs, threshold))
}

fn prune_mask(gs: &GaussianSet, threshold: f64) -> Vec<bool> {
    (0..gs.len()).map(|i| gs.opacity(i) >= threshold).collect()
}

/// Fits Gaussians initialized at `init` to the views with the default
/// perceptual term.
pub fn reconstruct(views: &ViewSet, init: &PointSet, cfg: &ReconConfig) -> Result<ReconResult> {
    reconstruct_with(views, init, cfg, &StructuralProxy::default(), |_, _| {})
}

/// As [`reconstruct`] with an explicit perceptual term and a per-iteration
/// observer.
pub fn reconstruct_with(
    views: &ViewSet,
    init: &PointSet,
    cfg: &ReconConfig,
    perceptual: &dyn Perceptual,
    mut observe: impl FnMut(&LossRecord, &GaussianSet),
) -> Result<ReconResult> {
    cfg.validate()?;
    if views.len() < 2 {
        return Err(Error::TooFewViews {
            required: 2,
            got: views.len(),
        });
    }
    views.validate()?;
    let mut gs = init_gaussians(init)?;
    optimize(views, &mut gs, scene_extent(init), cfg, perceptual, &mut observe).map(|trace| ReconResult {
        gaussians: gs,
        trace,
    })
}

/// Runs the optimization loop on an existing set. `extent` scales the
/// position learning rate.
pub fn optimize(
    views: &ViewSet,
    gs: &mut GaussianSet,
    extent: f64,
    cfg: &ReconConfig,
    perceptual: &dyn Perceptual,
    observe: &mut dyn FnMut(&LossRecord, &GaussianSet),
) -> Result<Vec<LossRecord>> {
    cfg.validate()?;
    if views.is_empty() {
        return Err(Error::EmptyViews);
    }
    gs.validate()?;
    let position_lr = cfg.learning_rates.position * extent.max(1e-6);
    let mut adam = GaussianAdam::new(gs.len(), cfg.adam);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let view = &views.views[it % views.len()];
        let out = rasterize(gs, &view.camera, cfg.background);
        let loss = recon_loss_with(&out.color, &view.image, &cfg.loss, perceptual)?;
        let grads = backward_from(gs, &view.camera, &out, &loss.grad);
        adam.step(gs, &grads, &cfg.learning_rates, position_lr)?;
        if let Some((group, index)) = gs.first_non_finite() {
            return Err(Error::Diverged { group, index });
        }
        let record = LossRecord {
            iteration: it,
            mse: loss.mse,
            dssim: loss.dssim,
            perceptual: loss.perceptual,
            total: loss.total,
        };
        if cfg.prune_interval > 0 && (it + 1) % cfg.prune_interval == 0 {
            let keep = prune_mask(gs, cfg.prune_opacity_threshold);
            if keep.iter().any(|k| !k) {
                *gs = gs.retain_indices(&keep);
                adam.retain(&keep);
            }
            log::info!("iteration {}: pruned to {} gaussians", it + 1, gs.len());
        }
        if (it + 1) % 100 == 0 {
            log::info!("iteration {}: loss {:.6}", it + 1, record.total);
        }
        observe(&record, gs);
        trace.push(record);
    }
    Ok(trace)
}

/// Writes `iteration,mse,dssim,perceptual,total` rows.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[LossRecord]) -> Result<()> {
    writeln!(w, "iteration,mse,dssim,perceptual,total")?;
    for r in trace {
        writeln!(w, "{},{:e},{:e},{:e},{:e}", r.iteration, r.mse, r.dssim, r.perceptual, r.total)?;
    }
    Ok(())
}

/// Centered moving average with a trailing window.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len().saturating_sub(window - 1));
    let mut sum: f64 = values.iter().take(window).sum();
    if values.len() < window {
        return out;
    }
    out.push(sum / window as f64);
    for i in window..values.len() {
        sum += values[i] - values[i - window];
        out.push(sum / window as f64);
    }
    out
}
