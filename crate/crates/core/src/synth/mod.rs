//! Analytic ground truth: SDF scenes rendered into posed views.

mod dataset;
mod scene;

use nalgebra::{Point2, Point3};
use rayon::prelude::*;

use crate::geom::Camera;
use crate::image::{Image, Mask, Rgb};

pub use dataset::{make_dataset, make_dataset_with, Perturbation, View, ViewSet};
pub use scene::{ColorFn, Primitive, SdfSample, SdfScene, Shape};

pub const MAX_STEPS: usize = 256;
pub const HIT_THRESHOLD: f64 = 1e-4;

/// Sphere-traced render of one view.
#[derive(Clone, Debug, PartialEq)]
pub struct GtRender {
    pub image: Image,
    pub mask: Mask,
    /// Camera-space depth per pixel, infinite on misses.
    pub depth: Vec<f64>,
}

/// Ray parameter range where the ray is inside the bounding sphere of the
/// unit box.
fn bounding_interval(origin: &Point3<f64>, dir: &nalgebra::Vector3<f64>) -> Option<(f64, f64)> {
    let radius = 0.75f64.sqrt() + 1e-3;
    let b = origin.coords.dot(dir);
    let c = origin.coords.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (t0, t1) = (-b - s, -b + s);
    if t1 <= 0.0 {
        return None;
    }
    Some((t0.max(0.0), t1))
}

/// First surface hit along a unit ray, with `offset` added to the distance.
pub(crate) fn trace(scene: &SdfScene, origin: &Point3<f64>, dir: &nalgebra::Vector3<f64>, offset: f64) -> Option<f64> {
    let (mut t, t_max) = bounding_interval(origin, dir)?;
    for _ in 0..MAX_STEPS {
        let d = scene.distance(&(origin + dir * t)) + offset;
        if d.abs() < HIT_THRESHOLD {
            return Some(t);
        }
        t += d;
        if t > t_max || t < 0.0 {
            return None;
        }
    }
    None
}

fn shade(scene: &SdfScene, p: &Point3<f64>, toward_camera: &nalgebra::Vector3<f64>) -> Rgb {
    let s = scene.eval(p);
    let n = scene.normal(p);
    let lambert = n.dot(toward_camera).max(0.0);
    let k = scene.ambient + (1.0 - scene.ambient) * lambert;
    s.color.map(|c| (c * k).clamp(0.0, 1.0))
}

/// Renders color, mask and depth; one ray through each pixel center.
pub fn render_gt(scene: &SdfScene, cam: &Camera, background: Rgb) -> GtRender {
    render_gt_eroded(scene, cam, background, 0.0)
}

/// As [`render_gt`], but the mask comes from the scene shrunk by `erosion`
/// world units.
pub(crate) fn render_gt_eroded(scene: &SdfScene, cam: &Camera, background: Rgb, erosion: f64) -> GtRender {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let origin = cam.center();
    let forward = cam.forward();
    let rows: Vec<Vec<(Rgb, bool, f64)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let dir = cam.ray_direction(&Point2::new(x as f64 + 0.5, y as f64 + 0.5));
                    match trace(scene, &origin, &dir, 0.0) {
                        Some(t) => {
                            let p = origin + dir * t;
                            let inside_mask = erosion <= 0.0 || trace(scene, &origin, &dir, erosion).is_some();
                            (shade(scene, &p, &-dir), inside_mask, t * dir.dot(&forward))
                        }
                        None => (background, false, f64::INFINITY),
                    }
                })
                .collect()
        })
        .collect();
    let mut image = Image::new(w, h);
    let mut mask = Mask::new(w, h);
    let mut depth = vec![f64::INFINITY; w * h];
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (c, m, d)) in row.into_iter().enumerate() {
            image.set(x, y, c);
            mask.set(x, y, m);
            depth[y * w + x] = d;
        }
    }
    GtRender { image, mask, depth }
}
