use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{render_gt_eroded, SdfScene};
use crate::error::{Error, Result};
use crate::geom::{load_cameras, orbit_cameras, save_cameras, Camera, OrbitConfig};
use crate::image::{Image, Mask, Rgb, WHITE};

/// One posed observation.
#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub image: Image,
    pub mask: Mask,
    pub depth: Option<Vec<f64>>,
}

impl View {
    pub fn validate(&self) -> Result<()> {
        let dims = (self.camera.width as usize, self.camera.height as usize);
        if self.image.dims() != dims {
            return Err(Error::DimensionMismatch {
                left: self.image.dims(),
                right: dims,
            });
        }
        if self.mask.dims() != dims {
            return Err(Error::DimensionMismatch {
                left: self.mask.dims(),
                right: dims,
            });
        }
        if let Some(d) = &self.depth {
            if d.len() != dims.0 * dims.1 {
                return Err(Error::ShapeMismatch {
                    what: "depth",
                    expected: dims.0 * dims.1,
                    got: d.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ViewSet {
    pub views: Vec<View>,
}

/// Inconsistencies injected into synthetic views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    /// Per-view, per-channel gain drawn from `1 +/- color_jitter`.
    pub color_jitter: f64,
    /// Upper bound of the per-view silhouette erosion, in pixels.
    pub mask_erosion_px: f64,
    pub seed: u64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            color_jitter: 0.02,
            mask_erosion_px: 0.5,
            seed: 0,
        }
    }
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.color_jitter) {
            return Err(Error::config("color_jitter must lie in [0, 1)"));
        }
        if !(self.mask_erosion_px >= 0.0 && self.mask_erosion_px.is_finite()) {
            return Err(Error::config("mask_erosion_px must be non-negative"));
        }
        Ok(())
    }
}

impl ViewSet {
    pub fn new(views: Vec<View>) -> Result<Self> {
        let set = Self { views };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.views.iter().enumerate() {
            v.validate()
                .map_err(|e| Error::format("view set", format!("view {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn cameras(&self) -> Vec<Camera> {
        self.views.iter().map(|v| v.camera.clone()).collect()
    }

    /// `(camera, mask)` pairs for carving.
    pub fn silhouettes(&self) -> Vec<(Camera, Mask)> {
        self.views.iter().map(|v| (v.camera.clone(), v.mask.clone())).collect()
    }

    pub fn image_path(dir: &Path, k: usize) -> std::path::PathBuf {
        dir.join("images").join(format!("view_{k:03}.png"))
    }

    pub fn mask_path(dir: &Path, k: usize) -> std::path::PathBuf {
        dir.join("masks").join(format!("view_{k:03}.png"))
    }

    /// `images/view_XXX.png`, `masks/view_XXX.png` and `cameras.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        for sub in ["images", "masks"] {
            let d = dir.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| Error::from(e).at(&d))?;
        }
        for (k, v) in self.views.iter().enumerate() {
            v.image.save_png(&Self::image_path(dir, k))?;
            v.mask.save_png(&Self::mask_path(dir, k))?;
        }
        save_cameras(&dir.join("cameras.json"), &self.cameras())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cams = load_cameras(&dir.join("cameras.json"))?;
        if cams.is_empty() {
            return Err(Error::EmptyViews.at(dir.join("cameras.json")));
        }
        let mut views = Vec::with_capacity(cams.len());
        for (k, camera) in cams.into_iter().enumerate() {
            let image_path = Self::image_path(dir, k);
            let mask_path = Self::mask_path(dir, k);
            let image = Image::load_png(&image_path)?;
            let mask = Mask::load_png(&mask_path)?;
            let view = View {
                camera,
                image,
                mask,
                depth: None,
            };
            view.validate().map_err(|e| e.at(&image_path))?;
            views.push(view);
        }
        Ok(Self { views })
    }
}

/// Renders every rig camera against a white background.
pub fn make_dataset(scene: &SdfScene, cfg: &OrbitConfig) -> Result<ViewSet> {
    make_dataset_with(scene, cfg, WHITE, None)
}

pub fn make_dataset_with(
    scene: &SdfScene,
    cfg: &OrbitConfig,
    background: Rgb,
    perturbation: Option<&Perturbation>,
) -> Result<ViewSet> {
    scene.validate()?;
    let cams = orbit_cameras(cfg)?;
    if let Some(p) = perturbation {
        p.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(perturbation.map_or(0, |p| p.seed));
    let mut views = Vec::with_capacity(cams.len());
    for cam in cams {
        let (gains, erosion) = match perturbation {
            Some(p) => {
                let gains: [f64; 3] = std::array::from_fn(|_| 1.0 + p.color_jitter * (2.0 * rng.random::<f64>() - 1.0));
                let px = p.mask_erosion_px * rng.random::<f64>();
                (gains, px * cfg.distance / cam.fx)
            }
            None => ([1.0; 3], 0.0),
        };
        let gt = render_gt_eroded(scene, &cam, background, erosion);
        let mut image = gt.image;
        if perturbation.is_some() {
            for px in image.as_mut_slice().chunks_exact_mut(3) {
                for c in 0..3 {
                    px[c] = (px[c] * gains[c]).clamp(0.0, 1.0);
                }
            }
        }
        views.push(View {
            camera: cam,
            image,
            mask: gt.mask,
            depth: Some(gt.depth),
        });
    }
    Ok(ViewSet { views })
}
