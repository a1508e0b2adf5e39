//! Pipeline stages as directory-to-directory steps. Each stage reads its
//! inputs from disk so a chained run matches the individual commands.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{CarveConfig, EvalConfig, MeshConfig, PipelineConfig, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{chamfer, psnr, ssim_metric, MetricReport};
use crate::geom::OrbitConfig;
use crate::grid::{carve, sample_surface, PointSet, VoxelGrid};
use crate::image::Image;
use crate::io;
use crate::loss::{Perceptual, StructuralProxy};
use crate::mesh::{extract_mesh, refine_texture, TexturedMesh, INIT_GRAY};
use crate::optim::{reconstruct, ReconConfig};
use crate::splat::{rasterize, GaussianSet};
use crate::synth::{make_dataset_with, render_gt, SdfScene, ViewSet};

pub const SCENE_FILE: &str = "scene.json";
pub const POINTS_FILE: &str = "points.ply";
pub const GAUSSIANS_FILE: &str = "gaussians.ply";
pub const LOSS_FILE: &str = "loss.csv";
pub const RENDERS_DIR: &str = "renders";
pub const MESH_FILE: &str = "mesh.obj";
pub const REFINE_FILE: &str = "refine.csv";
pub const METRICS_FILE: &str = "metrics.json";

/// Renders the dataset and stores the scene next to it.
pub fn synth(scene: &SdfScene, cfg: &SynthConfig, out: &Path) -> Result<ViewSet> {
    let views = make_dataset_with(scene, &cfg.orbit, cfg.background, cfg.perturbation.as_ref())?;
    views.save(out)?;
    let path = out.join(SCENE_FILE);
    std::fs::write(&path, scene.to_json()? + "\n").map_err(|e| Error::from(e).at(&path))?;
    log::info!("wrote {} views to {}", views.len(), out.display());
    Ok(views)
}

/// Carves the hull, saves the grid and `n_init` points sampled on its surface.
pub fn carve_dataset(data: &Path, cfg: &CarveConfig, out: &Path) -> Result<(VoxelGrid, PointSet)> {
    cfg.validate()?;
    let views = ViewSet::load(data)?;
    let grid = carve(&views.silhouettes(), cfg.resolution, cfg.aabb)?;
    if grid.is_empty() {
        return Err(Error::EmptyHull {
            background_view: views.views.iter().position(|v| v.mask.is_empty()),
        });
    }
    let hull = extract_mesh(&grid, cfg.smooth_iters)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points = sample_surface(&hull, cfg.n_init, &mut rng)?;
    grid.save(out)?;
    io::save_points(&out.join(POINTS_FILE), &points)?;
    log::info!("hull of {} cells, {} init points", grid.occupied_count(), points.len());
    Ok((grid, points))
}

/// Fits Gaussians and writes them with the loss trace and training-view renders.
pub fn reconstruct_dataset(data: &Path, init: &Path, cfg: &ReconConfig, out: &Path) -> Result<GaussianSet> {
    let views = ViewSet::load(data)?;
    let points = io::load_points(init)?;
    let result = reconstruct(&views, &points, cfg)?;
    io::save_gaussians(&out.join(GAUSSIANS_FILE), &result.gaussians)?;
    io::save_trace(&out.join(LOSS_FILE), &result.trace)?;
    for (k, v) in views.views.iter().enumerate() {
        let img = rasterize(&result.gaussians, &v.camera, cfg.background).color;
        img.save_png(&out.join(RENDERS_DIR).join(format!("view_{k:03}.png")))?;
    }
    Ok(result.gaussians)
}

/// Extracts the hull mesh, refines its vertex colors and writes the OBJ and trace.
pub fn mesh_dataset(grid_dir: &Path, data: &Path, cfg: &MeshConfig, out: &Path) -> Result<TexturedMesh> {
    let grid = VoxelGrid::load(grid_dir)?.downsample(cfg.downsample)?;
    let views = ViewSet::load(data)?;
    let mesh = extract_mesh(&grid, cfg.smooth_iters)?;
    let gray = TexturedMesh::uniform(mesh, INIT_GRAY);
    let result = refine_texture(&gray, &views, &cfg.refine)?;
    io::save_obj(&out.join(MESH_FILE), &result.mesh)?;
    io::save_trace(&out.join(REFINE_FILE), &result.trace)?;
    Ok(result.mesh)
}

/// PNGs inside `dir`, or inside `dir/images` for a dataset directory.
fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let images = dir.join("images");
    let dir = if images.is_dir() { images } else { dir.to_path_buf() };
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::from(e).at(&dir))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::format("image directory", "no PNG files").at(dir));
    }
    Ok(files)
}

/// Mean image metrics over same-named PNGs.
pub fn compare_images(rendered: &Path, reference: &Path, perceptual: &dyn Perceptual) -> Result<MetricReport> {
    let files = image_files(rendered)?;
    let ref_dir = image_files(reference)?[0].parent().unwrap().to_path_buf();
    let (mut p, mut s, mut l) = (0.0, 0.0, 0.0);
    for f in &files {
        let img = Image::load_png(f)?;
        let gt_path = ref_dir.join(f.file_name().unwrap());
        let gt = Image::load_png(&gt_path)?;
        p += psnr(&img, &gt).map_err(|e| e.at(&gt_path))?;
        s += ssim_metric(&img, &gt).map_err(|e| e.at(&gt_path))?;
        l += perceptual.evaluate(&img, &gt).map_err(|e| e.at(&gt_path))?.value;
    }
    let n = files.len() as f64;
    Ok(MetricReport {
        psnr: Some(p / n),
        ssim: Some(s / n),
        perceptual: Some(l / n),
        ..Default::default()
    })
}

pub fn compare_points(points: &PointSet, reference: &PointSet) -> Result<MetricReport> {
    Ok(MetricReport {
        chamfer: Some(chamfer(points, reference)?),
        n_points: Some(points.len()),
        ..Default::default()
    })
}

pub fn gaussian_centers(gs: &GaussianSet) -> PointSet {
    PointSet::new((0..gs.len()).map(|i| gs.position(i).into()).collect())
}

/// Held-out view metrics and the chamfer distance of the Gaussian centers to
/// the true surface.
pub fn evaluate_against_scene(
    gs: &GaussianSet,
    scene: &SdfScene,
    orbit: &OrbitConfig,
    cfg: &EvalConfig,
    recon: &ReconConfig,
) -> Result<(MetricReport, Image, Image)> {
    let cam = orbit.camera_at(cfg.held_out_azimuth_deg.to_radians())?;
    let gt = render_gt(scene, &cam, recon.background).image;
    let img = rasterize(gs, &cam, recon.background).color;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let truth = scene.sample_surface(cfg.surface_samples, &mut rng);
    let geometry = if gs.is_empty() {
        MetricReport {
            n_points: Some(0),
            ..Default::default()
        }
    } else {
        compare_points(&gaussian_centers(gs), &truth)?
    };
    let report = MetricReport {
        psnr: Some(psnr(&img, &gt)?),
        ssim: Some(ssim_metric(&img, &gt)?),
        perceptual: Some(StructuralProxy::default().evaluate(&img, &gt)?.value),
        ..geometry
    };
    Ok((report, img, gt))
}

/// Output locations of a pipeline run.
#[derive(Clone, Debug)]
pub struct PipelineLayout {
    pub data: PathBuf,
    pub carve: PathBuf,
    pub reconstruct: PathBuf,
    pub mesh: PathBuf,
    pub eval: PathBuf,
}

impl PipelineLayout {
    pub fn new(out: &Path) -> Self {
        Self {
            data: out.join("data"),
            carve: out.join("carve"),
            reconstruct: out.join("reconstruct"),
            mesh: out.join("mesh"),
            eval: out.join("eval"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub layout: PipelineLayout,
    pub metrics: MetricReport,
    pub gaussians: GaussianSet,
    pub mesh: TexturedMesh,
    pub grid: VoxelGrid,
}

/// synth, carve, reconstruct, mesh and eval in sequence under `out`.
pub fn run_pipeline(scene: &SdfScene, cfg: &PipelineConfig, out: &Path) -> Result<PipelineOutput> {
    cfg.carve.validate()?;
    cfg.reconstruct.validate()?;
    cfg.mesh.refine.validate()?;
    let layout = PipelineLayout::new(out);
    synth(scene, &cfg.synth, &layout.data).map_err(|e| stage("synth", e))?;
    let (grid, _) = carve_dataset(&layout.data, &cfg.carve, &layout.carve).map_err(|e| stage("carve", e))?;
    let gaussians = reconstruct_dataset(
        &layout.data,
        &layout.carve.join(POINTS_FILE),
        &cfg.reconstruct,
        &layout.reconstruct,
    )
    .map_err(|e| stage("reconstruct", e))?;
    let mesh = mesh_dataset(&layout.carve, &layout.data, &cfg.mesh, &layout.mesh).map_err(|e| stage("mesh", e))?;
    let (metrics, img, gt) = evaluate_against_scene(&gaussians, scene, &cfg.synth.orbit, &cfg.eval, &cfg.reconstruct)
        .map_err(|e| stage("eval", e))?;
    img.save_png(&layout.eval.join("held_out.png"))?;
    gt.save_png(&layout.eval.join("held_out_reference.png"))?;
    io::save_json(&out.join(METRICS_FILE), &metrics)?;
    Ok(PipelineOutput {
        layout,
        metrics,
        gaussians,
        mesh,
        grid,
    })
}

/// Prefixes the failing stage while keeping the error kind.
fn stage(name: &'static str, e: Error) -> Error {
    Error::Stage {
        stage: name,
        source: Box::new(e),
    }
}
