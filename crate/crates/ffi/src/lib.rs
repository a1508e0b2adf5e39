//! C ABI over the hullsplat pipeline.
//!
//! Objects cross the boundary as opaque handles created by `hs_*` functions
//! and released with the matching `hs_*_free`. Every fallible call returns an
//! [`HsStatus`]; on failure a message is available from
//! [`hs_last_error_message`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use hullsplat::grid::{carve, sample_surface, PointSet, VoxelGrid, DEFAULT_N_INIT};
use hullsplat::mesh::{extract_mesh, refine_texture, RefineConfig, TexturedMesh, INIT_GRAY};
use hullsplat::optim::{reconstruct, ReconConfig};
use hullsplat::splat::{rasterize, GaussianSet};
use hullsplat::synth::{make_dataset, SdfScene, ViewSet};
use hullsplat::{eval, io, Error, OrbitConfig};
use rand::SeedableRng;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Bad configuration, dimensions or malformed input data.
    InvalidArgument = 2,
    /// File system failure.
    Io = 3,
    /// Non-finite gradients or degenerate geometry.
    Numerical = 4,
    /// The hull is empty or the mesh is seen by no view.
    EmptyResult = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

pub struct HsScene(SdfScene);
pub struct HsViews(ViewSet);
pub struct HsGrid(VoxelGrid);
pub struct HsPoints(PointSet);
pub struct HsGaussians(GaussianSet);
pub struct HsMesh(TexturedMesh);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> HsStatus {
    match e {
        Error::Path { source, .. } | Error::Stage { source, .. } => status_of(source),
        Error::Io(_) => HsStatus::Io,
        Error::EmptyGrid | Error::EmptyHull { .. } | Error::NotVisible => HsStatus::EmptyResult,
        _ if e.is_numerical() => HsStatus::Numerical,
        _ => HsStatus::InvalidArgument,
    }
}

/// Internal failure carrying the status to report.
struct Fail(HsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(HsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal error: {msg}"));
            HsStatus::Internal
        }
    }
}

unsafe fn arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_str(p: *const c_char, what: &str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(HsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn c_path(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    c_str(p, what).map(PathBuf::from)
}

/// Parses an optional JSON config; null means defaults.
unsafe fn c_config<T: serde::de::DeserializeOwned + Default>(p: *const c_char) -> Result<T, Fail> {
    if p.is_null() {
        return Ok(T::default());
    }
    serde_json::from_str(&c_str(p, "config")?).map_err(|e| Fail(HsStatus::InvalidArgument, e.to_string()))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread; empty when none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The built-in checkered sphere.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn hs_scene_checker_sphere(out: *mut *mut HsScene) -> HsStatus {
    guard(|| {
        *out_ptr(out, "out")? = boxed(HsScene(SdfScene::checker_sphere()));
        Ok(())
    })
}

/// Parses a scene from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn hs_scene_from_json(json: *const c_char, out: *mut *mut HsScene) -> HsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let scene = SdfScene::from_json(&c_str(json, "json")?)?;
        *out = boxed(HsScene(scene));
        Ok(())
    })
}

/// # Safety
/// `scene` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_scene_free(scene: *mut HsScene) {
    free(scene)
}

/// Renders `n_views` orbit views of `resolution` squared pixels.
///
/// # Safety
/// `scene` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn hs_synth(
    scene: *const HsScene,
    n_views: usize,
    resolution: u32,
    out: *mut *mut HsViews,
) -> HsStatus {
    guard(|| {
        let scene = arg(scene, "scene")?;
        let out = out_ptr(out, "out")?;
        let cfg = OrbitConfig {
            n_views,
            resolution,
            ..Default::default()
        };
        *out = boxed(HsViews(make_dataset(&scene.0, &cfg)?));
        Ok(())
    })
}

/// Loads a dataset directory (`images/`, `masks/`, `cameras.json`).
///
/// # Safety
/// `dir` must be a NUL-terminated path and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn hs_views_load(dir: *const c_char, out: *mut *mut HsViews) -> HsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(HsViews(ViewSet::load(&c_path(dir, "dir")?)?));
        Ok(())
    })
}

/// # Safety
/// `views` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn hs_views_save(views: *const HsViews, dir: *const c_char) -> HsStatus {
    guard(|| {
        arg(views, "views")?.0.save(&c_path(dir, "dir")?)?;
        Ok(())
    })
}

/// Number of views, or 0 for a null handle.
///
/// # Safety
/// `views` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_views_count(views: *const HsViews) -> usize {
    views.as_ref().map_or(0, |v| v.0.len())
}

/// # Safety
/// `views` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_views_free(views: *mut HsViews) {
    free(views)
}

/// Visual hull over the default unit box.
///
/// # Safety
/// `views` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn hs_carve(views: *const HsViews, resolution: usize, out: *mut *mut HsGrid) -> HsStatus {
    guard(|| {
        let views = arg(views, "views")?;
        let out = out_ptr(out, "out")?;
        let grid = carve(&views.0.silhouettes(), resolution, Default::default())?;
        if grid.is_empty() {
            return Err(Error::EmptyHull {
                background_view: views.0.views.iter().position(|v| v.mask.is_empty()),
            }
            .into());
        }
        *out = boxed(HsGrid(grid));
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_grid_occupied_count(grid: *const HsGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.occupied_count())
}

/// Occupied volume in world units, or 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_grid_volume(grid: *const HsGrid) -> f64 {
    grid.as_ref().map_or(0.0, |g| g.0.volume())
}

/// # Safety
/// `grid` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_grid_free(grid: *mut HsGrid) {
    free(grid)
}

/// Marching cubes plus `smooth_iters` rounds of smoothing; vertices start gray.
///
/// # Safety
/// `grid` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn hs_mesh_extract(grid: *const HsGrid, smooth_iters: usize, out: *mut *mut HsMesh) -> HsStatus {
    guard(|| {
        let grid = arg(grid, "grid")?;
        let out = out_ptr(out, "out")?;
        let mesh = extract_mesh(&grid.0, smooth_iters)?;
        *out = boxed(HsMesh(TexturedMesh::uniform(mesh, INIT_GRAY)));
        Ok(())
    })
}

/// Area-uniform surface samples; `n == 0` uses the default initial count.
///
/// # Safety
/// `mesh` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn hs_mesh_sample(mesh: *const HsMesh, n: usize, seed: u64, out: *mut *mut HsPoints) -> HsStatus {
    guard(|| {
        let mesh = arg(mesh, "mesh")?;
        let out = out_ptr(out, "out")?;
        let n = if n == 0 { DEFAULT_N_INIT } else { n };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        *out = boxed(HsPoints(sample_surface(&mesh.0.mesh, n, &mut rng)?));
        Ok(())
    })
}

/// Refines vertex colors against the views. `config_json` may be null.
///
/// # Safety
/// `mesh` and `views` must be live handles, `config_json` null or a
/// NUL-terminated string, and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn hs_mesh_refine(
    mesh: *const HsMesh,
    views: *const HsViews,
    config_json: *const c_char,
    out: *mut *mut HsMesh,
) -> HsStatus {
    guard(|| {
        let mesh = arg(mesh, "mesh")?;
        let views = arg(views, "views")?;
        let out = out_ptr(out, "out")?;
        let cfg: RefineConfig = c_config(config_json)?;
        *out = boxed(HsMesh(refine_texture(&mesh.0, &views.0, &cfg)?.mesh));
        Ok(())
    })
}

/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_mesh_vertex_count(mesh: *const HsMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.mesh.vertices.len())
}

/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_mesh_face_count(mesh: *const HsMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.mesh.faces.len())
}

/// Copies vertex colors as `3 * vertex_count` doubles.
///
/// # Safety
/// `mesh` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_mesh_colors(mesh: *const HsMesh, buf: *mut f64, len: usize) -> HsStatus {
    guard(|| {
        let mesh = arg(mesh, "mesh")?;
        let flat: Vec<f64> = mesh.0.colors.iter().flatten().copied().collect();
        copy_out(&flat, buf, len)
    })
}

/// # Safety
/// `mesh` must be a live handle and `path` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn hs_mesh_save_obj(mesh: *const HsMesh, path: *const c_char) -> HsStatus {
    guard(|| {
        io::save_obj(&c_path(path, "path")?, &arg(mesh, "mesh")?.0)?;
        Ok(())
    })
}

/// # Safety
/// `mesh` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_mesh_free(mesh: *mut HsMesh) {
    free(mesh)
}

/// # Safety
/// `points` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_points_count(points: *const HsPoints) -> usize {
    points.as_ref().map_or(0, |p| p.0.len())
}

/// Copies positions as `3 * count` doubles.
///
/// # Safety
/// `points` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_points_copy(points: *const HsPoints, buf: *mut f64, len: usize) -> HsStatus {
    guard(|| {
        let points = arg(points, "points")?;
        let flat: Vec<f64> = points.0.points.iter().flat_map(|p| p.coords.iter().copied()).collect();
        copy_out(&flat, buf, len)
    })
}

/// # Safety
/// `path` must be a NUL-terminated path and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn hs_points_load_ply(path: *const c_char, out: *mut *mut HsPoints) -> HsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(HsPoints(io::load_points(&c_path(path, "path")?)?));
        Ok(())
    })
}

/// # Safety
/// `points` must be a live handle and `path` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn hs_points_save_ply(points: *const HsPoints, path: *const c_char) -> HsStatus {
    guard(|| {
        io::save_points(&c_path(path, "path")?, &arg(points, "points")?.0)?;
        Ok(())
    })
}

/// # Safety
/// `points` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_points_free(points: *mut HsPoints) {
    free(points)
}

/// Symmetric chamfer distance with squared nearest-neighbor distances.
///
/// # Safety
/// `a` and `b` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hs_chamfer(a: *const HsPoints, b: *const HsPoints, out: *mut f64) -> HsStatus {
    guard(|| {
        let (a, b) = (arg(a, "a")?, arg(b, "b")?);
        *out_ptr(out, "out")? = eval::chamfer(&a.0, &b.0)?;
        Ok(())
    })
}

/// Fits Gaussians seeded at `init`. `config_json` may be null.
///
/// # Safety
/// `views` and `init` must be live handles, `config_json` null or a
/// NUL-terminated string, and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn hs_reconstruct(
    views: *const HsViews,
    init: *const HsPoints,
    config_json: *const c_char,
    out: *mut *mut HsGaussians,
) -> HsStatus {
    guard(|| {
        let views = arg(views, "views")?;
        let init = arg(init, "init")?;
        let out = out_ptr(out, "out")?;
        let cfg: ReconConfig = c_config(config_json)?;
        *out = boxed(HsGaussians(reconstruct(&views.0, &init.0, &cfg)?.gaussians));
        Ok(())
    })
}

/// # Safety
/// `gs` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_gaussians_count(gs: *const HsGaussians) -> usize {
    gs.as_ref().map_or(0, |g| g.0.len())
}

/// Renders the Gaussians from camera `view` of `views` into `buf` as
/// row-major interleaved RGB doubles (`3 * width * height` values).
///
/// # Safety
/// `gs` and `views` must be live handles, `background` must point to 3
/// doubles and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_gaussians_render(
    gs: *const HsGaussians,
    views: *const HsViews,
    view: usize,
    background: *const f64,
    buf: *mut f64,
    len: usize,
) -> HsStatus {
    guard(|| {
        let gs = arg(gs, "gaussians")?;
        let views = arg(views, "views")?;
        if background.is_null() {
            return Err(null("background"));
        }
        let bg = std::slice::from_raw_parts(background, 3);
        let v = views.0.views.get(view).ok_or_else(|| {
            Fail(HsStatus::InvalidArgument, format!("view {view} out of range for {} views", views.0.len()))
        })?;
        let img = rasterize(&gs.0, &v.camera, [bg[0], bg[1], bg[2]]).color;
        copy_out(img.as_slice(), buf, len)
    })
}

/// # Safety
/// `gs` must be a live handle and `path` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn hs_gaussians_save_ply(gs: *const HsGaussians, path: *const c_char) -> HsStatus {
    guard(|| {
        io::save_gaussians(&c_path(path, "path")?, &arg(gs, "gaussians")?.0)?;
        Ok(())
    })
}

/// # Safety
/// `gs` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_gaussians_free(gs: *mut HsGaussians) {
    free(gs)
}

/// PSNR in dB between two interleaved RGB buffers of `width * height` pixels.
///
/// # Safety
/// `a` and `b` must each hold `3 * width * height` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_psnr(a: *const f64, b: *const f64, width: usize, height: usize, out: *mut f64) -> HsStatus {
    guard(|| {
        if a.is_null() || b.is_null() {
            return Err(null("image buffer"));
        }
        let n = 3 * width * height;
        let img = |p: *const f64| hullsplat::Image::from_raw(width, height, std::slice::from_raw_parts(p, n).to_vec());
        *out_ptr(out, "out")? = eval::psnr(&img(a)?, &img(b)?)?;
        Ok(())
    })
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Fail> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    if len < src.len() {
        return Err(Fail(
            HsStatus::InvalidArgument,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}
