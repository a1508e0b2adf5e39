//! Command-line front end. Every command is a thin wrapper over a stage in
//! [`stages`]; configs are JSON files whose fields are all optional and flags
//! override them.

pub mod config;
pub mod stages;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{load_config, CarveConfig, EvalConfig, MeshConfig, PipelineConfig, SynthConfig};
pub use stages::{run_pipeline, PipelineLayout, PipelineOutput};

use crate::error::{Error, Result};
use crate::eval::MetricReport;
use crate::io;
use crate::loss::StructuralProxy;
use crate::optim::ReconConfig;
use crate::synth::{Perturbation, SdfScene};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hullsplat", version, about = "Visual-hull initialized Gaussian splatting and mesh texturing")]
pub struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a posed dataset from an SDF scene.
    Synth(SynthArgs),
    /// Carve the visual hull and sample initial points on it.
    Carve(CarveArgs),
    /// Fit Gaussians to a dataset starting from a point PLY.
    Reconstruct(ReconstructArgs),
    /// Extract the hull mesh and refine its vertex colors.
    Mesh(MeshArgs),
    /// Compare rendered images and/or point clouds.
    Eval(EvalArgs),
    /// Run synth, carve, reconstruct, mesh and eval in one go.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene JSON; the checkered sphere when omitted.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long)]
    pub resolution: Option<u32>,
    #[arg(long)]
    pub distance: Option<f64>,
    #[arg(long)]
    pub elevation_deg: Option<f64>,
    #[arg(long)]
    pub fov_deg: Option<f64>,
    /// Enable per-view color jitter and mask erosion with default strengths.
    #[arg(long)]
    pub perturb: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CarveArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub n_init: Option<usize>,
    #[arg(long)]
    pub smooth_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Point PLY from `carve`.
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    /// Directory holding grid.bin and grid.json.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub smooth_iters: Option<usize>,
    #[arg(long)]
    pub downsample: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of rendered PNGs.
    #[arg(long, requires = "reference")]
    pub rendered: Option<PathBuf>,
    /// Directory (or dataset) holding same-named reference PNGs.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Point or Gaussian PLY.
    #[arg(long, requires = "reference_points")]
    pub points: Option<PathBuf>,
    #[arg(long)]
    pub reference_points: Option<PathBuf>,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub resolution: Option<u32>,
    #[arg(long)]
    pub perturb: bool,
}

/// Exit status for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn config_or_default<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    path.as_deref().map_or_else(|| Ok(T::default()), load_config)
}

fn load_scene(path: &Option<PathBuf>) -> Result<SdfScene> {
    path.as_deref().map_or_else(|| Ok(SdfScene::checker_sphere()), SdfScene::load)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => {
            let mut cfg: SynthConfig = config_or_default(&a.config)?;
            let o = &mut cfg.orbit;
            o.n_views = a.views.unwrap_or(o.n_views);
            o.resolution = a.resolution.unwrap_or(o.resolution);
            o.distance = a.distance.unwrap_or(o.distance);
            o.elevation = a.elevation_deg.map_or(o.elevation, f64::to_radians);
            o.fov_y = a.fov_deg.map_or(o.fov_y, f64::to_radians);
            if a.perturb && cfg.perturbation.is_none() {
                cfg.perturbation = Some(Perturbation::default());
            }
            if let (Some(seed), Some(p)) = (a.seed, cfg.perturbation.as_mut()) {
                p.seed = seed;
            }
            stages::synth(&load_scene(&a.scene)?, &cfg, &a.out)?;
        }
        Command::Carve(a) => {
            let mut cfg: CarveConfig = config_or_default(&a.config)?;
            cfg.resolution = a.resolution.unwrap_or(cfg.resolution);
            cfg.n_init = a.n_init.unwrap_or(cfg.n_init);
            cfg.smooth_iters = a.smooth_iters.unwrap_or(cfg.smooth_iters);
            cfg.seed = a.seed.unwrap_or(cfg.seed);
            stages::carve_dataset(&a.data, &cfg, &a.out)?;
        }
        Command::Reconstruct(a) => {
            let mut cfg: ReconConfig = config_or_default(&a.config)?;
            cfg.iterations = a.iterations.unwrap_or(cfg.iterations);
            stages::reconstruct_dataset(&a.data, &a.init, &cfg, &a.out)?;
        }
        Command::Mesh(a) => {
            let mut cfg: MeshConfig = config_or_default(&a.config)?;
            cfg.smooth_iters = a.smooth_iters.unwrap_or(cfg.smooth_iters);
            cfg.downsample = a.downsample.unwrap_or(cfg.downsample);
            cfg.refine.steps = a.steps.unwrap_or(cfg.refine.steps);
            stages::mesh_dataset(&a.grid, &a.data, &cfg, &a.out)?;
        }
        Command::Eval(a) => {
            let report = evaluate(a)?;
            match &a.out {
                Some(path) => io::save_json(path, &report)?,
                None => print!("{}", report.to_json()?),
            }
        }
        Command::Pipeline(a) => {
            let mut cfg: PipelineConfig = config_or_default(&a.config)?;
            cfg.reconstruct.iterations = a.iterations.unwrap_or(cfg.reconstruct.iterations);
            cfg.synth.orbit.resolution = a.resolution.unwrap_or(cfg.synth.orbit.resolution);
            if a.perturb && cfg.synth.perturbation.is_none() {
                cfg.synth.perturbation = Some(Perturbation::default());
            }
            if let Some(seed) = a.seed {
                cfg = cfg.with_seed(seed);
            }
            let out = run_pipeline(&load_scene(&a.scene)?, &cfg, &a.out)?;
            print!("{}", out.metrics.to_json()?);
        }
    }
    Ok(())
}

/// Points from a PLY holding either plain points or Gaussians.
fn load_any_points(path: &Path) -> Result<crate::grid::PointSet> {
    match io::load_gaussians(path) {
        Ok(gs) => Ok(stages::gaussian_centers(&gs)),
        Err(_) => io::load_points(path),
    }
}

fn evaluate(a: &EvalArgs) -> Result<MetricReport> {
    let mut report = MetricReport::default();
    if a.rendered.is_none() && a.points.is_none() {
        return Err(Error::config("eval needs --rendered/--reference or --points/--reference-points"));
    }
    if let (Some(r), Some(reference)) = (&a.rendered, &a.reference) {
        let images = stages::compare_images(r, reference, &StructuralProxy::default())?;
        report.psnr = images.psnr;
        report.ssim = images.ssim;
        report.perceptual = images.perceptual;
    }
    if let (Some(p), Some(reference)) = (&a.points, &a.reference_points) {
        let geometry = stages::compare_points(&load_any_points(p)?, &load_any_points(reference)?)?;
        report.chamfer = geometry.chamfer;
        report.n_points = geometry.n_points;
    }
    Ok(report)
}
