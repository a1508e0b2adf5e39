use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;

use nalgebra::{Point3, Vector3, Vector4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PointSet;
use crate::image::Rgb;
use crate::splat::quat_to_matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Shape {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    /// Ring in the local xz-plane around the y axis.
    Torus { major: f64, minor: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ColorFn {
    Solid {
        color: Rgb,
    },
    /// Alternating cells in longitude (around local y) and latitude.
    Checker {
        a: Rgb,
        b: Rgb,
        lon_cells: u32,
        lat_cells: u32,
    },
}

impl ColorFn {
    /// Color at a point in the primitive's local frame.
    pub fn eval(&self, q: &Vector3<f64>) -> Rgb {
        match self {
            ColorFn::Solid { color } => *color,
            ColorFn::Checker {
                a,
                b,
                lon_cells,
                lat_cells,
            } => {
                let r = q.norm();
                if r == 0.0 {
                    return *a;
                }
                let lon = q.x.atan2(q.z) + PI;
                let lat = (q.y / r).clamp(-1.0, 1.0).asin() + FRAC_PI_2;
                let i = ((lon / TAU * *lon_cells as f64).floor() as i64).rem_euclid(*lon_cells as i64);
                let j = ((lat / PI * *lat_cells as f64).floor() as i64).clamp(0, *lat_cells as i64 - 1);
                if (i + j) % 2 == 0 {
                    *a
                } else {
                    *b
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    #[serde(default)]
    pub center: [f64; 3],
    /// Quaternion `(w, x, y, z)`, local to world.
    #[serde(default = "identity_quat")]
    pub rotation: [f64; 4],
    pub color: ColorFn,
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn default_ambient() -> f64 {
    0.9
}

/// Union of analytic primitives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdfScene {
    pub primitives: Vec<Primitive>,
    /// Unlit fraction of the headlight shading.
    #[serde(default = "default_ambient")]
    pub ambient: f64,
}

/// Distance to the scene and the color of the nearest primitive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdfSample {
    pub distance: f64,
    pub color: Rgb,
    pub primitive: usize,
}

impl Primitive {
    fn local(&self, p: &Point3<f64>) -> Vector3<f64> {
        let r = quat_to_matrix(&Vector4::from(self.rotation));
        r.transpose() * (p.coords - Vector3::from(self.center))
    }

    fn to_world(&self, q: &Vector3<f64>) -> Point3<f64> {
        let r = quat_to_matrix(&Vector4::from(self.rotation));
        Point3::from(r * q + Vector3::from(self.center))
    }

    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        let q = self.local(p);
        match self.shape {
            Shape::Sphere { radius } => q.norm() - radius,
            Shape::Box { half_extents } => {
                let d = q.abs() - Vector3::from(half_extents);
                d.map(|v| v.max(0.0)).norm() + d.max().min(0.0)
            }
            Shape::Torus { major, minor } => {
                let ring = (q.x * q.x + q.z * q.z).sqrt() - major;
                (ring * ring + q.y * q.y).sqrt() - minor
            }
        }
    }

    /// Local-frame bounding half extents.
    fn local_half_extents(&self) -> Vector3<f64> {
        match self.shape {
            Shape::Sphere { radius } => Vector3::repeat(radius),
            Shape::Box { half_extents } => Vector3::from(half_extents),
            Shape::Torus { major, minor } => Vector3::new(major + minor, minor, major + minor),
        }
    }

    fn validate(&self, i: usize) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let ok = match self.shape {
            Shape::Sphere { radius } => positive(radius),
            Shape::Box { half_extents } => half_extents.iter().all(|&v| positive(v)),
            Shape::Torus { major, minor } => positive(major) && positive(minor) && minor < major,
        };
        if !ok {
            return Err(Error::config(format!("primitive {i} has invalid size parameters")));
        }
        let q = Vector4::from(self.rotation);
        if !(q.norm() > 0.0) || !q.iter().all(|v| v.is_finite()) || !self.center.iter().all(|v| v.is_finite()) {
            return Err(Error::config(format!("primitive {i} has an invalid pose")));
        }
        if let ColorFn::Checker {
            lon_cells, lat_cells, ..
        } = self.color
        {
            if lon_cells == 0 || lat_cells == 0 {
                return Err(Error::config(format!("primitive {i} checker needs at least one cell")));
            }
        }
        // rotated local box must stay inside the unit box
        let r = quat_to_matrix(&q);
        let half = r.abs() * self.local_half_extents();
        for a in 0..3 {
            if (self.center[a] - half[a]).abs().max((self.center[a] + half[a]).abs()) > 0.5 + 1e-12 {
                return Err(Error::config(format!("primitive {i} extends outside [-0.5, 0.5]^3")));
            }
        }
        Ok(())
    }

    fn area(&self) -> f64 {
        match self.shape {
            Shape::Sphere { radius } => 4.0 * PI * radius * radius,
            Shape::Box { half_extents: h } => 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]),
            Shape::Torus { major, minor } => 4.0 * PI * PI * major * minor,
        }
    }

    fn sample_local<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector3<f64> {
        match self.shape {
            Shape::Sphere { radius } => unit_vector(rng) * radius,
            Shape::Box { half_extents: h } => {
                let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
                let total: f64 = areas.iter().sum();
                let mut t = rng.random::<f64>() * total;
                let mut axis = 2;
                for (a, &ar) in areas.iter().enumerate() {
                    if t < ar {
                        axis = a;
                        break;
                    }
                    t -= ar;
                }
                let mut q = Vector3::from_fn(|a, _| (2.0 * rng.random::<f64>() - 1.0) * h[a]);
                q[axis] = if rng.random::<bool>() { h[axis] } else { -h[axis] };
                q
            }
            Shape::Torus { major, minor } => loop {
                // area element is proportional to (major + minor cos v)
                let u = rng.random::<f64>() * TAU;
                let v = rng.random::<f64>() * TAU;
                let w = rng.random::<f64>() * (major + minor);
                if w <= major + minor * v.cos() {
                    let ring = major + minor * v.cos();
                    break Vector3::new(ring * u.sin(), minor * v.sin(), ring * u.cos());
                }
            },
        }
    }
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        if let Some(u) = v.try_normalize(1e-12) {
            return u;
        }
    }
}

impl SdfScene {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        let scene = Self {
            primitives,
            ambient: default_ambient(),
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Radius-0.4 sphere at the origin with an 8 x 4 two-color checker.
    pub fn checker_sphere() -> Self {
        Self {
            primitives: vec![Primitive {
                shape: Shape::Sphere { radius: 0.4 },
                center: [0.0; 3],
                rotation: identity_quat(),
                color: ColorFn::Checker {
                    a: [0.85, 0.55, 0.30],
                    b: [0.30, 0.55, 0.85],
                    lon_cells: 8,
                    lat_cells: 4,
                },
            }],
            ambient: default_ambient(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::config("scene needs at least one primitive"));
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(Error::config("ambient must lie in [0, 1]"));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            p.validate(i)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: SdfScene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_json(&text).map_err(|e| e.at(path))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        self.primitives
            .iter()
            .map(|prim| prim.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn eval(&self, p: &Point3<f64>) -> SdfSample {
        let mut best = (f64::INFINITY, 0);
        for (i, prim) in self.primitives.iter().enumerate() {
            let d = prim.distance(p);
            if d < best.0 {
                best = (d, i);
            }
        }
        let prim = &self.primitives[best.1];
        SdfSample {
            distance: best.0,
            color: prim.color.eval(&prim.local(p)),
            primitive: best.1,
        }
    }

    /// Unit outward normal from central differences of the distance.
    pub fn normal(&self, p: &Point3<f64>) -> Vector3<f64> {
        let h = 1e-6;
        let g = Vector3::from_fn(|a, _| {
            let mut e = Vector3::zeros();
            e[a] = h;
            self.distance(&(p + e)) - self.distance(&(p - e))
        });
        g.try_normalize(0.0).unwrap_or_else(Vector3::y)
    }

    /// Points drawn uniformly by area from the visible union surface, with
    /// outward normals.
    pub fn sample_surface<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointSet {
        let areas: Vec<f64> = self.primitives.iter().map(Primitive::area).collect();
        let total: f64 = areas.iter().sum();
        let mut points = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        while points.len() < n {
            let mut t = rng.random::<f64>() * total;
            let mut k = areas.len() - 1;
            for (i, &a) in areas.iter().enumerate() {
                if t < a {
                    k = i;
                    break;
                }
                t -= a;
            }
            let prim = &self.primitives[k];
            let p = prim.to_world(&prim.sample_local(rng));
            // drop points buried inside another primitive
            if self.distance(&p) < -1e-9 {
                continue;
            }
            normals.push(self.normal(&p));
            points.push(p);
        }
        PointSet {
            points,
            normals: Some(normals),
        }
    }
}
