use nalgebra::{Matrix2, Matrix2x3, Matrix3, Point3, Vector2, Vector3};
use rayon::prelude::*;

use super::gaussians::{quat_to_matrix, quat_to_matrix_backward, Gaussian, GaussianGrads, GaussianSet};
use crate::geom::{Camera, NEAR_EPSILON};
use crate::image::{Image, Rgb, WHITE};

const TILE: usize = 16;

/// Mahalanobis radius enclosing 99% of a 2D Gaussian's mass.
const MASS_99_RADIUS: f64 = 3.034_854_258_770_293;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterSettings {
    pub background: Rgb,
    /// Per-splat contributions below this alpha are skipped.
    pub min_alpha: f64,
    /// Compositing stops once transmittance falls below this.
    pub min_transmittance: f64,
    /// Added to the diagonal of every screen-space covariance, in px^2.
    pub cov_blur: f64,
}

impl Default for RasterSettings {
    fn default() -> Self {
        Self {
            background: WHITE,
            min_alpha: 1.0 / 255.0,
            min_transmittance: 1e-4,
            cov_blur: 0.3,
        }
    }
}

impl RasterSettings {
    pub fn with_background(background: Rgb) -> Self {
        Self {
            background,
            ..Self::default()
        }
    }
}

/// Screen-space footprint of one Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedGaussian {
    pub mean: Vector2<f64>,
    /// Regularized screen covariance (px^2).
    pub cov: Matrix2<f64>,
    /// Inverse covariance entries `(a, b, c)` of `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    pub depth: f64,
}

struct ProjectionParts {
    t: Vector3<f64>,
    jac: Matrix2x3<f64>,
    rot: Matrix3<f64>,
    scale: Vector3<f64>,
    cov3: Matrix3<f64>,
}

fn projection_parts(position: &Vector3<f64>, log_scale: &Vector3<f64>, rot_q: &nalgebra::Vector4<f64>, cam: &Camera) -> ProjectionParts {
    let t = cam.pose.rotation * position + cam.pose.translation;
    let (tx, ty, tz) = (t.x, t.y, t.z);
    let jac = Matrix2x3::new(
        cam.fx / tz,
        0.0,
        -cam.fx * tx / (tz * tz),
        0.0,
        cam.fy / tz,
        -cam.fy * ty / (tz * tz),
    );
    let rot = quat_to_matrix(rot_q);
    let scale = log_scale.map(f64::exp);
    let a = rot * Matrix3::from_diagonal(&scale);
    ProjectionParts {
        t,
        jac,
        rot,
        scale,
        cov3: a * a.transpose(),
    }
}

fn project_parts(parts: &ProjectionParts, cam: &Camera, cov_blur: f64) -> Option<ProjectedGaussian> {
    let t = parts.t;
    if t.z <= NEAR_EPSILON {
        return None;
    }
    let m = parts.jac * cam.pose.rotation;
    let cov = m * parts.cov3 * m.transpose() + Matrix2::identity() * cov_blur;
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let conic = [cov[(1, 1)] / det, -cov[(0, 1)] / det, cov[(0, 0)] / det];
    let mean = Vector2::new(cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy);
    // cull when the 99% ellipse's bounding box misses the image
    let ex = MASS_99_RADIUS * cov[(0, 0)].sqrt();
    let ey = MASS_99_RADIUS * cov[(1, 1)].sqrt();
    if mean.x + ex < 0.0 || mean.x - ex > cam.width as f64 || mean.y + ey < 0.0 || mean.y - ey > cam.height as f64 {
        return None;
    }
    Some(ProjectedGaussian {
        mean,
        cov,
        conic,
        depth: t.z,
    })
}

/// EWA projection of one Gaussian; `None` when culled.
pub fn project_gaussian(g: &Gaussian, cam: &Camera) -> Option<ProjectedGaussian> {
    project_gaussian_with(g, cam, RasterSettings::default().cov_blur)
}

pub fn project_gaussian_with(g: &Gaussian, cam: &Camera, cov_blur: f64) -> Option<ProjectedGaussian> {
    let parts = projection_parts(&g.position, &g.log_scale, &g.rotation, cam);
    project_parts(&parts, cam, cov_blur)
}

/// A visible Gaussian in depth order, with its pixel bounding box.
#[derive(Clone, Debug)]
struct Splat {
    index: u32,
    proj: ProjectedGaussian,
    opacity: f64,
    color: [f64; 3],
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

#[derive(Clone, Debug, Default)]
struct TileRecord {
    /// Indices into the depth-sorted splat list.
    splats: Vec<u32>,
    /// `pixel_start[p]..pixel_start[p + 1]` indexes `entries` for tile pixel `p`.
    pixel_start: Vec<u32>,
    /// `(position in splats, alpha)` per contribution, front to back.
    entries: Vec<(u32, f64)>,
}

/// Everything the backward pass needs from a forward render.
#[derive(Clone, Debug)]
pub struct RenderAux {
    settings: RasterSettings,
    tiles_x: usize,
    sorted: Vec<Splat>,
    tiles: Vec<TileRecord>,
}

impl RenderAux {
    /// Number of Gaussians that survived culling.
    pub fn visible_count(&self) -> usize {
        self.sorted.len()
    }

    /// Original indices of Gaussians with at least one pixel contribution.
    pub fn contributing(&self) -> Vec<usize> {
        let mut seen = vec![false; self.sorted.len()];
        for tile in &self.tiles {
            for &(k, _) in &tile.entries {
                seen[tile.splats[k as usize] as usize] = true;
            }
        }
        let mut out: Vec<usize> = seen
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(i, _)| self.sorted[i].index as usize)
            .collect();
        out.sort_unstable();
        out
    }
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub color: Image,
    /// Accumulated opacity per pixel, row-major.
    pub alpha: Vec<f64>,
    pub aux: RenderAux,
}

fn pixel_span(center: f64, extent: f64, size: usize) -> Option<(usize, usize)> {
    // pixel i is covered when its center i + 0.5 lies within [center - extent, center + extent]
    let lo = (center - extent - 0.5).ceil().max(0.0);
    let hi = (center + extent - 0.5).floor().min(size as f64 - 1.0);
    if lo > hi || !lo.is_finite() && !hi.is_finite() {
        return None;
    }
    Some((lo as usize, hi as usize))
}

fn sorted_splats(gs: &GaussianSet, cam: &Camera, settings: &RasterSettings) -> Vec<Splat> {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut splats: Vec<Splat> = (0..gs.len())
        .into_par_iter()
        .filter_map(|i| {
            let parts = projection_parts(&gs.position(i), &gs.log_scale(i), &gs.rotation(i), cam);
            let proj = project_parts(&parts, cam, settings.cov_blur)?;
            let opacity = gs.opacity(i);
            if opacity < settings.min_alpha || opacity <= 0.0 {
                return None;
            }
            // ellipse where opacity * exp(-d^2 / 2) >= min_alpha
            let r2 = if settings.min_alpha > 0.0 {
                2.0 * (opacity / settings.min_alpha).ln()
            } else {
                f64::INFINITY
            };
            let ex = (r2 * proj.cov[(0, 0)]).sqrt();
            let ey = (r2 * proj.cov[(1, 1)]).sqrt();
            let (x0, x1) = pixel_span(proj.mean.x, ex, w)?;
            let (y0, y1) = pixel_span(proj.mean.y, ey, h)?;
            let c = gs.color(i);
            Some(Splat {
                index: i as u32,
                proj,
                opacity,
                color: [c.x, c.y, c.z],
                x0,
                x1,
                y0,
                y1,
            })
        })
        .collect();
    splats.sort_by(|a, b| a.proj.depth.total_cmp(&b.proj.depth).then(a.index.cmp(&b.index)));
    splats
}

#[inline]
fn splat_alpha(s: &Splat, px: f64, py: f64) -> f64 {
    let dx = px - s.proj.mean.x;
    let dy = py - s.proj.mean.y;
    let [a, b, c] = s.proj.conic;
    let power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy);
    if power > 0.0 {
        return 0.0;
    }
    s.opacity * power.exp()
}

struct TileGeometry {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

fn tile_geometry(t: usize, tiles_x: usize, width: usize, height: usize) -> TileGeometry {
    let (tx, ty) = (t % tiles_x, t / tiles_x);
    let x0 = tx * TILE;
    let y0 = ty * TILE;
    TileGeometry {
        x0,
        y0,
        w: TILE.min(width - x0),
        h: TILE.min(height - y0),
    }
}

/// Forward splatting with default settings and the given background.
pub fn rasterize(gs: &GaussianSet, cam: &Camera, background: Rgb) -> RenderOutput {
    rasterize_with(gs, cam, &RasterSettings::with_background(background))
}

pub fn rasterize_with(gs: &GaussianSet, cam: &Camera, settings: &RasterSettings) -> RenderOutput {
    let (width, height) = (cam.width as usize, cam.height as usize);
    let tiles_x = width.div_ceil(TILE);
    let tiles_y = height.div_ceil(TILE);
    let sorted = sorted_splats(gs, cam, settings);

    let mut tile_splats: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (k, s) in sorted.iter().enumerate() {
        for ty in s.y0 / TILE..=s.y1 / TILE {
            for tx in s.x0 / TILE..=s.x1 / TILE {
                tile_splats[ty * tiles_x + tx].push(k as u32);
            }
        }
    }

    let bg = settings.background;
    let results: Vec<(TileRecord, Vec<[f64; 4]>)> = tile_splats
        .into_par_iter()
        .enumerate()
        .map(|(t, splats)| {
            let geo = tile_geometry(t, tiles_x, width, height);
            let mut rec = TileRecord {
                splats,
                pixel_start: Vec::with_capacity(geo.w * geo.h + 1),
                entries: Vec::new(),
            };
            let mut pixels = Vec::with_capacity(geo.w * geo.h);
            for ly in 0..geo.h {
                for lx in 0..geo.w {
                    let (x, y) = (geo.x0 + lx, geo.y0 + ly);
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    rec.pixel_start.push(rec.entries.len() as u32);
                    let mut transmittance = 1.0;
                    let mut acc = [0.0; 3];
                    for (local, &k) in rec.splats.iter().enumerate() {
                        let s = &sorted[k as usize];
                        if x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1 {
                            continue;
                        }
                        let alpha = splat_alpha(s, px, py);
                        if alpha < settings.min_alpha || alpha <= 0.0 {
                            continue;
                        }
                        let wgt = alpha * transmittance;
                        for c in 0..3 {
                            acc[c] += s.color[c] * wgt;
                        }
                        rec.entries.push((local as u32, alpha));
                        transmittance *= 1.0 - alpha;
                        if transmittance < settings.min_transmittance {
                            break;
                        }
                    }
                    for c in 0..3 {
                        acc[c] += bg[c] * transmittance;
                    }
                    pixels.push([acc[0], acc[1], acc[2], 1.0 - transmittance]);
                }
            }
            rec.pixel_start.push(rec.entries.len() as u32);
            (rec, pixels)
        })
        .collect();

    let mut color = Image::new(width, height);
    let mut alpha = vec![0.0; width * height];
    let mut tiles = Vec::with_capacity(results.len());
    for (t, (rec, pixels)) in results.into_iter().enumerate() {
        let geo = tile_geometry(t, tiles_x, width, height);
        for (p, px) in pixels.iter().enumerate() {
            let (x, y) = (geo.x0 + p % geo.w, geo.y0 + p / geo.w);
            color.set(x, y, [px[0], px[1], px[2]]);
            alpha[y * width + x] = px[3];
        }
        tiles.push(rec);
    }

    RenderOutput {
        color,
        alpha,
        aux: RenderAux {
            settings: *settings,
            tiles_x,
            sorted,
            tiles,
        },
    }
}

#[derive(Clone, Copy, Default)]
struct ScreenGrad {
    mean: [f64; 2],
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

impl ScreenGrad {
    fn add(&mut self, o: &ScreenGrad) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

/// Recomputes the forward pass, then backpropagates `dl_dimage`.
pub fn rasterize_backward(gs: &GaussianSet, cam: &Camera, background: Rgb, dl_dimage: &Image) -> GaussianGrads {
    let out = rasterize(gs, cam, background);
    backward_from(gs, cam, &out, dl_dimage)
}

/// Gradients of all Gaussian parameters given the upstream image gradient
/// and the auxiliary records of a matching forward pass.
pub fn backward_from(gs: &GaussianSet, cam: &Camera, out: &RenderOutput, dl_dimage: &Image) -> GaussianGrads {
    let aux = &out.aux;
    let (width, height) = (cam.width as usize, cam.height as usize);
    assert_eq!(dl_dimage.dims(), (width, height), "gradient image must match the render");
    let bg = aux.settings.background;

    let per_tile: Vec<Vec<ScreenGrad>> = aux
        .tiles
        .par_iter()
        .enumerate()
        .map(|(t, rec)| {
            let geo = tile_geometry(t, aux.tiles_x, width, height);
            let mut grads = vec![ScreenGrad::default(); rec.splats.len()];
            let mut trans = Vec::new();
            for p in 0..geo.w * geo.h {
                let range = rec.pixel_start[p] as usize..rec.pixel_start[p + 1] as usize;
                if range.is_empty() {
                    continue;
                }
                let (x, y) = (geo.x0 + p % geo.w, geo.y0 + p / geo.w);
                let dl = dl_dimage.get(x, y);
                if dl == [0.0; 3] {
                    continue;
                }
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let entries = &rec.entries[range];
                trans.clear();
                let mut tr = 1.0;
                for &(_, a) in entries {
                    trans.push(tr);
                    tr *= 1.0 - a;
                }
                // color of everything behind the current splat, per unit transmittance
                let mut behind = bg;
                for (&(local, alpha), &t_i) in entries.iter().zip(&trans).rev() {
                    let s = &aux.sorted[rec.splats[local as usize] as usize];
                    let g = &mut grads[local as usize];
                    let wgt = alpha * t_i;
                    let mut dl_dalpha = 0.0;
                    for c in 0..3 {
                        g.color[c] += wgt * dl[c];
                        dl_dalpha += t_i * (s.color[c] - behind[c]) * dl[c];
                        behind[c] = s.color[c] * alpha + (1.0 - alpha) * behind[c];
                    }
                    // alpha = opacity * exp(power)
                    g.opacity += dl_dalpha * alpha / s.opacity;
                    let dl_dpower = dl_dalpha * alpha;
                    let dx = px - s.proj.mean.x;
                    let dy = py - s.proj.mean.y;
                    let [a, b, c] = s.proj.conic;
                    g.mean[0] += dl_dpower * (a * dx + b * dy);
                    g.mean[1] += dl_dpower * (b * dx + c * dy);
                    g.conic[0] += dl_dpower * (-0.5 * dx * dx);
                    g.conic[1] += dl_dpower * (-dx * dy);
                    g.conic[2] += dl_dpower * (-0.5 * dy * dy);
                }
            }
            grads
        })
        .collect();

    // fixed tile order keeps the accumulation deterministic
    let mut screen = vec![ScreenGrad::default(); aux.sorted.len()];
    for (rec, grads) in aux.tiles.iter().zip(&per_tile) {
        for (&k, g) in rec.splats.iter().zip(grads) {
            screen[k as usize].add(g);
        }
    }

    let n = gs.len();
    let param_grads: Vec<(usize, [f64; 14])> = aux
        .sorted
        .par_iter()
        .zip(screen.par_iter())
        .map(|(s, sg)| (s.index as usize, splat_param_grads(gs, cam, s, sg)))
        .collect();

    let mut out_grads = GaussianGrads::zeros(n);
    for (i, g) in param_grads {
        out_grads.positions[3 * i..3 * i + 3].copy_from_slice(&g[0..3]);
        out_grads.log_scales[3 * i..3 * i + 3].copy_from_slice(&g[3..6]);
        out_grads.rotations[4 * i..4 * i + 4].copy_from_slice(&g[6..10]);
        out_grads.opacity_logits[i] = g[10];
        out_grads.colors[3 * i..3 * i + 3].copy_from_slice(&g[11..14]);
    }
    out_grads
}

/// Chains screen-space gradients back to the 3D parameters of one Gaussian.
/// Layout: position(3), log_scale(3), rotation(4), opacity_logit(1), color(3).
fn splat_param_grads(gs: &GaussianSet, cam: &Camera, s: &Splat, sg: &ScreenGrad) -> [f64; 14] {
    let i = s.index as usize;
    let q = gs.rotation(i);
    let parts = projection_parts(&gs.position(i), &gs.log_scale(i), &q, cam);
    let w = cam.pose.rotation;
    let m = parts.jac * w;
    let [a, b, c] = s.proj.conic;
    let conic = Matrix2::new(a, b, b, c);
    let g_conic = Matrix2::new(sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2]);
    let g_cov2 = -(conic * g_conic * conic);
    let g_cov3 = m.transpose() * g_cov2 * m;
    let g_m = 2.0 * g_cov2 * m * parts.cov3;
    let g_jac = g_m * w.transpose();

    let t = parts.t;
    let (tx, ty, tz) = (t.x, t.y, t.z);
    let (fx, fy) = (cam.fx, cam.fy);
    let tz2 = tz * tz;
    let tz3 = tz2 * tz;
    let mut g_t = Vector3::zeros();
    // mean2d = (fx tx / tz + cx, fy ty / tz + cy)
    g_t.x += sg.mean[0] * fx / tz;
    g_t.y += sg.mean[1] * fy / tz;
    g_t.z += -sg.mean[0] * fx * tx / tz2 - sg.mean[1] * fy * ty / tz2;
    // jacobian entries
    g_t.z += g_jac[(0, 0)] * (-fx / tz2);
    g_t.x += g_jac[(0, 2)] * (-fx / tz2);
    g_t.z += g_jac[(0, 2)] * (2.0 * fx * tx / tz3);
    g_t.z += g_jac[(1, 1)] * (-fy / tz2);
    g_t.y += g_jac[(1, 2)] * (-fy / tz2);
    g_t.z += g_jac[(1, 2)] * (2.0 * fy * ty / tz3);
    let g_pos = w.transpose() * g_t;

    // cov3 = A A^T, A = R S
    let s_mat = Matrix3::from_diagonal(&parts.scale);
    let a_mat = parts.rot * s_mat;
    let g_a = 2.0 * g_cov3 * a_mat;
    let mut g_ls = Vector3::zeros();
    let mut g_rot = Matrix3::zeros();
    for k in 0..3 {
        let mut acc = 0.0;
        for r in 0..3 {
            acc += g_a[(r, k)] * parts.rot[(r, k)];
            g_rot[(r, k)] = g_a[(r, k)] * parts.scale[k];
        }
        g_ls[k] = acc * parts.scale[k];
    }
    let g_q = quat_to_matrix_backward(&q, &g_rot);
    let g_logit = sg.opacity * s.opacity * (1.0 - s.opacity);

    [
        g_pos.x,
        g_pos.y,
        g_pos.z,
        g_ls.x,
        g_ls.y,
        g_ls.z,
        g_q[0],
        g_q[1],
        g_q[2],
        g_q[3],
        g_logit,
        sg.color[0],
        sg.color[1],
        sg.color[2],
    ]
}

/// Depth of each Gaussian center in camera space, `None` when behind.
pub fn center_depth(p: &Vector3<f64>, cam: &Camera) -> Option<f64> {
    cam.project(&Point3::from(*p)).map(|pr| pr.depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{look_at, OrbitConfig, RigidTransform};
    use crate::image::BLACK;
    use nalgebra::Vector4;

    fn front_camera(size: u32) -> Camera {
        let pose = look_at(Point3::new(0.0, 0.0, 2.0), Point3::origin(), Vector3::y()).unwrap();
        let f = size as f64;
        Camera::new(size, size, f, f, size as f64 / 2.0, size as f64 / 2.0, pose).unwrap()
    }

    #[test]
    fn isotropic_projection_at_target() {
        let cam = OrbitConfig { resolution: 64, ..Default::default() }.camera_at(0.7).unwrap();
        let s = 0.05;
        let g = Gaussian::isotropic(Vector3::zeros(), s, 0.5, Vector3::zeros());
        let p = project_gaussian_with(&g, &cam, 0.0).unwrap();
        assert!((p.mean - Vector2::new(cam.cx, cam.cy)).norm() < 1e-9);
        let expected = (cam.fx * s / 2.0).powi(2);
        assert!((p.cov[(0, 0)] - expected).abs() < 1e-9);
        assert!((p.cov[(1, 1)] - expected).abs() < 1e-9);
        assert!(p.cov[(0, 1)].abs() < 1e-12);
        assert!((p.depth - 2.0).abs() < 1e-12);

        let reg = project_gaussian(&g, &cam).unwrap();
        assert!((reg.cov[(0, 0)] - expected - 0.3).abs() < 1e-9);
    }

    #[test]
    fn behind_camera_is_culled() {
        let cam = front_camera(32);
        let g = Gaussian::isotropic(Vector3::new(0.0, 0.0, 3.0), 0.1, 0.5, Vector3::zeros());
        assert!(project_gaussian(&g, &cam).is_none());
        let far_off = Gaussian::isotropic(Vector3::new(50.0, 0.0, 0.0), 0.01, 0.5, Vector3::zeros());
        assert!(project_gaussian(&far_off, &cam).is_none());
    }

    #[test]
    fn isotropic_rotation_invariance() {
        let cam = front_camera(32);
        let mut g = Gaussian::isotropic(Vector3::new(0.1, -0.05, 0.2), 0.07, 0.5, Vector3::zeros());
        let a = project_gaussian(&g, &cam).unwrap();
        g.rotation = Vector4::new(0.3, 0.5, -0.7, 0.2).normalize();
        let b = project_gaussian(&g, &cam).unwrap();
        assert!((a.cov - b.cov).abs().max() < 1e-12);
    }

    #[test]
    fn empty_set_renders_background() {
        let cam = front_camera(20);
        let out = rasterize(&GaussianSet::new(), &cam, [0.2, 0.4, 0.6]);
        for y in 0..20 {
            for x in 0..20 {
                assert_eq!(out.color.get(x, y), [0.2, 0.4, 0.6]);
            }
        }
        assert!(out.alpha.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn single_gaussian_center_pixel() {
        // identity pose at distance 2 keeps the math simple: center at pixel (8, 8)
        let pose = RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::new(0.0, 0.0, 2.0),
        };
        let cam = Camera::new(17, 17, 20.0, 20.0, 8.5, 8.5, pose).unwrap();
        let g = Gaussian::isotropic(Vector3::zeros(), 0.1, 0.8, Vector3::new(1.0, 1.0, 1.0));
        let out = rasterize(&GaussianSet::from_gaussians(&[g]), &cam, BLACK);
        let c = out.color.get(8, 8);
        for v in c {
            assert!((v - 0.8).abs() < 1e-12, "{v}");
        }
        assert!((out.alpha[8 * 17 + 8] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn opaque_front_occludes_back() {
        // odd size puts pixel (12, 12)'s center on the optical axis
        let cam = front_camera(25);
        let red = Gaussian {
            opacity_logit: 40.0,
            ..Gaussian::isotropic(Vector3::new(0.0, 0.0, 0.5), 0.3, 0.5, Vector3::new(1.0, 0.0, 0.0))
        };
        let blue = Gaussian::isotropic(Vector3::new(0.0, 0.0, -0.5), 0.3, 0.9, Vector3::new(0.0, 0.0, 1.0));
        let out = rasterize(&GaussianSet::from_gaussians(&[blue, red]), &cam, WHITE);
        let c = out.color.get(12, 12);
        assert!((c[0] - 1.0).abs() < 1e-9 && c[1].abs() < 1e-9 && c[2].abs() < 1e-9, "{c:?}");
    }

    #[test]
    fn zero_upstream_gradient() {
        let cam = front_camera(24);
        let g = Gaussian::isotropic(Vector3::new(0.05, 0.0, 0.0), 0.2, 0.6, Vector3::new(0.3, 0.6, 0.1));
        let gs = GaussianSet::from_gaussians(&[g]);
        let grads = rasterize_backward(&gs, &cam, WHITE, &Image::new(24, 24));
        assert!(grads.is_zero());
        assert_eq!(grads.len(), 1);
    }

    use crate::loss::mse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grad_camera() -> Camera {
        let pose = look_at(Point3::new(0.3, 0.2, 2.0), Point3::origin(), Vector3::y()).unwrap();
        Camera::new(32, 32, 32.0, 32.0, 16.0, 16.0, pose).unwrap()
    }

    /// Wide Gaussians whose 1/255 contours enclose the whole image, spaced
    /// in depth so finite differences never reorder them.
    fn smooth_scene(rng: &mut ChaCha8Rng, n: usize) -> GaussianSet {
        let forward = grad_camera().forward();
        let mut gs = GaussianSet::new();
        for k in 0..n {
            let layer = (k as f64 - 0.5 * n as f64) * 0.06;
            let p = Vector3::from_fn(|_, _| rng.random_range(-0.02..0.02)) + forward * layer;
            gs.push(&Gaussian {
                position: p,
                log_scale: Vector3::from_fn(|_, _| rng.random_range(0.85f64.ln()..1.3f64.ln())),
                rotation: Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize(),
                opacity_logit: crate::splat::logit(rng.random_range(0.1..0.6)),
                color: Vector3::from_fn(|_, _| rng.random()),
            });
        }
        gs
    }

    fn params_mut(gs: &mut GaussianSet) -> [&mut Vec<f64>; 5] {
        [&mut gs.positions, &mut gs.log_scales, &mut gs.rotations, &mut gs.opacity_logits, &mut gs.colors]
    }

    fn check_gradients(gs: &GaussianSet, cam: &Camera, settings: &RasterSettings, target: &Image) {
        let loss = |g: &GaussianSet| mse(&rasterize_with(g, cam, settings).color, target).unwrap();
        let out = rasterize_with(gs, cam, settings);
        let upstream = mse(&out.color, target).unwrap().grad;
        let grads = backward_from(gs, cam, &out, &upstream);
        let analytic: Vec<f64> = grads.groups().iter().flat_map(|(_, g)| g.iter().copied()).collect();
        let h = 1e-3;
        let mut fd = Vec::new();
        for group in 0..5 {
            let len = params_mut(&mut gs.clone())[group].len();
            for k in 0..len {
                let mut plus = gs.clone();
                params_mut(&mut plus)[group][k] += h;
                let mut minus = gs.clone();
                params_mut(&mut minus)[group][k] -= h;
                fd.push((loss(&plus).value - loss(&minus).value) / (2.0 * h));
            }
        }
        let mut loose = 0;
        for (i, (a, f)) in analytic.iter().zip(&fd).enumerate() {
            let err = (a - f).abs();
            if err >= 1e-3 * f.abs() {
                loose += 1;
                assert!(err < 1e-5, "coordinate {i}: analytic {a}, finite-difference {f}");
            }
        }
        assert!(loose * 20 <= fd.len(), "{loose} of {} coordinates outside relative tolerance", fd.len());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cam = grad_camera();
        for seed in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gs = smooth_scene(&mut rng, 1 + seed as usize * 2);
            let target = Image::from_raw(32, 32, (0..32 * 32 * 3).map(|_| rng.random()).collect()).unwrap();
            check_gradients(&gs, &cam, &RasterSettings::default(), &target);
        }
    }

    #[test]
    fn compact_gradients_without_cutoffs() {
        let cam = grad_camera();
        let settings = RasterSettings {
            min_alpha: 0.0,
            min_transmittance: 0.0,
            ..RasterSettings::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut gs = GaussianSet::new();
        for _ in 0..5 {
            gs.push(&Gaussian {
                position: Vector3::from_fn(|_, _| rng.random_range(-0.2..0.2)),
                log_scale: Vector3::from_fn(|_, _| rng.random_range(0.05f64.ln()..0.2f64.ln())),
                rotation: Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize(),
                opacity_logit: rng.random_range(-1.0..2.0),
                color: Vector3::from_fn(|_, _| rng.random()),
            });
        }
        let target = Image::filled(32, 32, [0.3, 0.5, 0.7]);
        check_gradients(&gs, &cam, &settings, &target);
    }

    #[test]
    fn single_gaussian_color_gradient() {
        let cam = grad_camera();
        let gs = GaussianSet::from_gaussians(&[Gaussian::isotropic(
            Vector3::zeros(),
            0.15,
            0.7,
            Vector3::new(0.2, 0.4, 0.9),
        )]);
        let target = Image::filled(32, 32, [0.5, 0.5, 0.5]);
        let out = rasterize(&gs, &cam, WHITE);
        let grads = backward_from(&gs, &cam, &out, &mse(&out.color, &target).unwrap().grad);
        for c in 0..3 {
            let h = 1e-3;
            let mut p = gs.clone();
            p.colors[c] += h;
            let mut m = gs.clone();
            m.colors[c] -= h;
            let fd = (mse(&rasterize(&p, &cam, WHITE).color, &target).unwrap().value
                - mse(&rasterize(&m, &cam, WHITE).color, &target).unwrap().value)
                / (2.0 * h);
            assert!((fd - grads.colors[c]).abs() < 1e-3 * fd.abs(), "{fd} vs {}", grads.colors[c]);
        }
    }

    #[test]
    fn position_gradient_points_toward_shifted_target() {
        // identity-rotation camera so image axes align with world x/y
        let pose = RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::new(0.0, 0.0, 2.0),
        };
        let cam = Camera::new(32, 32, 32.0, 32.0, 16.0, 16.0, pose).unwrap();
        let g = Gaussian::isotropic(Vector3::new(-0.05, 0.03, 0.0), 0.12, 0.8, Vector3::new(0.1, 0.1, 0.1));
        // 2 px at depth 2 with f = 32 is 0.125 world units
        let shifted = Gaussian {
            position: g.position + Vector3::new(0.125, 0.125, 0.0),
            ..g.clone()
        };
        let target = rasterize(&GaussianSet::from_gaussians(&[shifted]), &cam, WHITE).color;
        let gs = GaussianSet::from_gaussians(&[g]);
        let out = rasterize(&gs, &cam, WHITE);
        let grads = backward_from(&gs, &cam, &out, &mse(&out.color, &target).unwrap().grad);
        // descent direction is -grad; the target lies at +x, +y
        assert!(grads.positions[0] < 0.0, "{:?}", grads.positions);
        assert!(grads.positions[1] < 0.0, "{:?}", grads.positions);
    }

    #[test]
    fn permutation_invariance() {
        let cam = grad_camera();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut gs = GaussianSet::new();
        for _ in 0..12 {
            gs.push(&Gaussian {
                position: Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3)),
                log_scale: Vector3::from_fn(|_, _| rng.random_range(-3.0..-1.5)),
                rotation: Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize(),
                opacity_logit: rng.random_range(-1.0..3.0),
                color: Vector3::from_fn(|_, _| rng.random()),
            });
        }
        // duplicate depth to exercise the index tie-break
        let dup = gs.get(0);
        gs.push(&Gaussian {
            color: Vector3::new(1.0, 0.0, 0.0),
            ..dup
        });
        let base = rasterize(&gs, &cam, WHITE);
        let order: Vec<usize> = (0..gs.len()).rev().collect();
        let perm = rasterize(&gs.permuted(&order), &cam, WHITE);
        // tie-break by index reorders exactly-equal depths, so compare with the tie removed
        let without_tie = gs.retain_indices(&(0..gs.len()).map(|i| i != 0).collect::<Vec<_>>());
        let a = rasterize(&without_tie, &cam, WHITE);
        let order: Vec<usize> = (0..without_tie.len()).rev().collect();
        let b = rasterize(&without_tie.permuted(&order), &cam, WHITE);
        assert_eq!(a.color, b.color);
        assert_eq!(a.alpha, b.alpha);
        assert!(base.alpha.iter().zip(&perm.alpha).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn alpha_bounded_and_monotone() {
        let cam = grad_camera();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut gs = GaussianSet::new();
        let mut prev = vec![0.0; 32 * 32];
        for _ in 0..10 {
            gs.push(&Gaussian {
                position: Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3)),
                log_scale: Vector3::from_fn(|_, _| rng.random_range(-3.0..-1.5)),
                rotation: Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize(),
                opacity_logit: rng.random_range(-1.0..3.0),
                color: Vector3::from_fn(|_, _| rng.random()),
            });
            let out = rasterize(&gs, &cam, WHITE);
            for (a, p) in out.alpha.iter().zip(&prev) {
                assert!((0.0..=1.0).contains(a));
                assert!(*a >= p - 1e-12);
            }
            prev = out.alpha;
        }
    }

    #[test]
    fn transparent_set_is_background() {
        let cam = grad_camera();
        let g = Gaussian {
            opacity_logit: -30.0,
            ..Gaussian::isotropic(Vector3::zeros(), 0.2, 0.5, Vector3::new(1.0, 0.0, 0.0))
        };
        let out = rasterize(&GaussianSet::from_gaussians(&[g]), &cam, [0.1, 0.2, 0.3]);
        assert!(out.color.as_slice().chunks(3).all(|c| c == [0.1, 0.2, 0.3]));
    }
}
