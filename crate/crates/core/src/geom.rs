//! Pinhole cameras, look-at poses and the fixed orbit rig.
//!
//! Conventions: right-handed world with +y up. In camera space the camera
//! looks down +z, +x points right and +y points down, so image rows grow with
//! camera y. Pixel `(i, j)` covers `[i, i+1) x [j, j+1)`; its center sits at
//! `(i + 0.5, j + 0.5)`.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer than this to the camera plane are treated as behind it.
pub const NEAR_EPSILON: f64 = 1e-4;

const ROTATION_TOLERANCE: f64 = 1e-6;

/// Rigid world-to-camera transform: `x_cam = rotation * x_world + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation * p.coords + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        Self {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }
}

/// Checks orthonormality and `det = +1` to [`ROTATION_TOLERANCE`].
pub fn is_rotation(r: &Matrix3<f64>) -> bool {
    let err = (r * r.transpose() - Matrix3::identity()).abs().max();
    err <= ROTATION_TOLERANCE && (r.determinant() - 1.0).abs() <= ROTATION_TOLERANCE
}

/// World-to-camera pose that places the camera at `eye` looking at `target`.
pub fn look_at(eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Result<RigidTransform> {
    let forward = target - eye;
    let dist = forward.norm();
    if !(dist > 1e-12) {
        return Err(Error::DegenerateDirection("eye coincides with target"));
    }
    let forward = forward / dist;
    let right = forward.cross(&up);
    let right_norm = right.norm();
    if !(right_norm > 1e-9 * up.norm().max(1e-300)) || up.norm() == 0.0 {
        return Err(Error::DegenerateDirection("up is parallel to the view direction"));
    }
    let right = right / right_norm;
    let down = forward.cross(&right);
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let translation = -(rotation * eye.coords);
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

/// Pinhole camera with a world-to-camera pose.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub pose: RigidTransform,
}

/// A successful projection: continuous pixel coordinates plus camera-space depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub pixel: Point2<f64>,
    pub depth: f64,
}

impl Camera {
    pub fn new(
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        pose: RigidTransform,
    ) -> Result<Self> {
        let cam = Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            pose,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image size must be at least 1x1".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::InvalidCamera("principal point must be finite".into()));
        }
        if !is_rotation(&self.pose.rotation) {
            return Err(Error::InvalidCamera("rotation is not orthonormal with det +1".into()));
        }
        if !self.pose.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("translation must be finite".into()));
        }
        Ok(())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.pose.rotation.transpose() * self.pose.translation))
    }

    /// Unit forward (+z camera) axis in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.pose.rotation.row(2).transpose()
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.pose.apply(p)
    }

    /// Pinhole projection; `None` when the point is not in front of the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<Projection> {
        let c = self.world_to_camera(p);
        if c.z <= NEAR_EPSILON {
            return None;
        }
        Some(Projection {
            pixel: Point2::new(self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy),
            depth: c.z,
        })
    }

    /// Inverse of [`Camera::project`] for a known depth.
    pub fn unproject(&self, pixel: &Point2<f64>, depth: f64) -> Point3<f64> {
        let c = Vector3::new(
            (pixel.x - self.cx) / self.fx * depth,
            (pixel.y - self.cy) / self.fy * depth,
            depth,
        );
        Point3::from(self.pose.rotation.transpose() * (c - self.pose.translation))
    }

    /// World-space unit ray direction through a continuous pixel position.
    pub fn ray_direction(&self, pixel: &Point2<f64>) -> Vector3<f64> {
        let d = Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0);
        (self.pose.rotation.transpose() * d).normalize()
    }

    /// Integer pixel containing a continuous position, if inside the image.
    #[inline]
    pub fn pixel_index(&self, pixel: &Point2<f64>) -> Option<(usize, usize)> {
        if pixel.x >= 0.0 && pixel.y >= 0.0 {
            let (x, y) = (pixel.x.floor() as usize, pixel.y.floor() as usize);
            if x < self.width as usize && y < self.height as usize {
                return Some((x, y));
            }
        }
        None
    }
}

/// Parameters of the fixed orbit rig used to render object-centric views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitConfig {
    pub n_views: usize,
    pub distance: f64,
    /// Radians.
    pub elevation: f64,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    /// Square image side in pixels.
    pub resolution: u32,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            n_views: 18,
            distance: 2.0,
            elevation: 0.0,
            fov_y: 50f64.to_radians(),
            resolution: 512,
        }
    }
}

impl OrbitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_views < 1 {
            return Err(Error::config("n_views must be at least 1"));
        }
        if !(self.distance > 0.0) || !self.distance.is_finite() {
            return Err(Error::config("distance must be positive"));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::config("fov_y must lie in (0, pi)"));
        }
        if self.resolution < 1 {
            return Err(Error::config("resolution must be at least 1"));
        }
        if !self.elevation.is_finite() {
            return Err(Error::config("elevation must be finite"));
        }
        Ok(())
    }

    pub fn focal(&self) -> f64 {
        0.5 * self.resolution as f64 / (0.5 * self.fov_y).tan()
    }

    /// Azimuth of rig camera `k`, in radians.
    pub fn azimuth(&self, k: usize) -> f64 {
        std::f64::consts::TAU * k as f64 / self.n_views as f64
    }

    /// World position of a camera on this rig's sphere at the given azimuth.
    pub fn position(&self, azimuth: f64) -> Point3<f64> {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        Point3::new(self.distance * ce * sa, self.distance * se, self.distance * ce * ca)
    }

    /// A camera on the rig at an arbitrary azimuth, looking at the origin.
    pub fn camera_at(&self, azimuth: f64) -> Result<Camera> {
        self.validate()?;
        let pose = look_at(self.position(azimuth), Point3::origin(), Vector3::y())?;
        let f = self.focal();
        let c = 0.5 * self.resolution as f64;
        Camera::new(self.resolution, self.resolution, f, f, c, c, pose)
    }
}

/// The `n_views` rig cameras at azimuths `2 pi k / n_views`.
pub fn orbit_cameras(cfg: &OrbitConfig) -> Result<Vec<Camera>> {
    cfg.validate()?;
    (0..cfg.n_views).map(|k| cfg.camera_at(cfg.azimuth(k))).collect()
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    width: u32,
    height: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    /// Camera-to-world, 4x4 row-major.
    world_from_camera: [[f64; 4]; 4],
}

impl From<&Camera> for CameraRecord {
    fn from(cam: &Camera) -> Self {
        let m = cam.pose.inverse().to_matrix();
        let mut rows = [[0.0; 4]; 4];
        for (r, row) in rows.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = m[(r, c)];
            }
        }
        Self {
            width: cam.width,
            height: cam.height,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            world_from_camera: rows,
        }
    }
}

impl TryFrom<CameraRecord> for Camera {
    type Error = Error;

    fn try_from(rec: CameraRecord) -> Result<Self> {
        let m = Matrix4::from_fn(|r, c| rec.world_from_camera[r][c]);
        let pose = RigidTransform::from_matrix(&m).inverse();
        Camera::new(rec.width, rec.height, rec.fx, rec.fy, rec.cx, rec.cy, pose)
    }
}

pub fn cameras_to_json(cams: &[Camera]) -> Result<String> {
    let recs: Vec<CameraRecord> = cams.iter().map(CameraRecord::from).collect();
    Ok(serde_json::to_string_pretty(&recs)?)
}

pub fn cameras_from_json(text: &str) -> Result<Vec<Camera>> {
    let recs: Vec<CameraRecord> = serde_json::from_str(text)?;
    recs.into_iter().map(Camera::try_from).collect()
}

pub fn save_cameras(path: &Path, cams: &[Camera]) -> Result<()> {
    std::fs::write(path, cameras_to_json(cams)?).map_err(|e| Error::from(e).at(path))
}

pub fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    cameras_from_json(&text).map_err(|e| e.at(path))
}
