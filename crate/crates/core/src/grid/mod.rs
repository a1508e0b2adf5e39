//! Occupancy grids: visual-hull carving, surface extraction and sampling.

mod mc;
mod sample;

use std::path::Path;

use bitvec::prelude::*;
use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Camera;
use crate::image::Mask;

pub use mc::{box_filtered, marching_cubes, marching_cubes_field, ScalarField};
pub use sample::{sample_surface, PointSet};

pub const DEFAULT_RESOLUTION: usize = 128;
pub const DEFAULT_N_INIT: usize = 16384;

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Aabb {
    fn default() -> Self {
        Self::cube(0.5)
    }
}

impl Aabb {
    /// `[-half, half]^3`.
    pub fn cube(half: f64) -> Self {
        Self {
            min: [-half; 3],
            max: [half; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            let (lo, hi) = (self.min[a], self.max[a]);
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::config(format!("aabb axis {a} has non-positive extent [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> Vector3<f64> {
        Vector3::from_fn(|a, _| self.max[a] - self.min[a])
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn expanded(&self, margin: Vector3<f64>) -> Aabb {
        Aabb {
            min: [self.min[0] - margin.x, self.min[1] - margin.y, self.min[2] - margin.z],
            max: [self.max[0] + margin.x, self.max[1] + margin.y, self.max[2] + margin.z],
        }
    }
}

/// `R^3` occupancy bits over an [`Aabb`], cell `(x, y, z)` at bit `x + R*(y + R*z)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelGrid {
    resolution: usize,
    aabb: AabbBits,
    bits: BitVec<u8, Lsb0>,
}

/// Bit-exact storage of the bounds so `VoxelGrid` can be `Eq`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct AabbBits([u64; 6]);

impl From<Aabb> for AabbBits {
    fn from(b: Aabb) -> Self {
        AabbBits([
            b.min[0].to_bits(),
            b.min[1].to_bits(),
            b.min[2].to_bits(),
            b.max[0].to_bits(),
            b.max[1].to_bits(),
            b.max[2].to_bits(),
        ])
    }
}

impl From<AabbBits> for Aabb {
    fn from(b: AabbBits) -> Self {
        let f = |i: usize| f64::from_bits(b.0[i]);
        Aabb {
            min: [f(0), f(1), f(2)],
            max: [f(3), f(4), f(5)],
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GridHeader {
    resolution: usize,
    aabb: Aabb,
}

impl VoxelGrid {
    pub fn empty(resolution: usize, aabb: Aabb) -> Result<Self> {
        Self::filled(resolution, aabb, false)
    }

    pub fn filled(resolution: usize, aabb: Aabb, value: bool) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::config(format!("grid resolution must be at least 2, got {resolution}")));
        }
        aabb.validate()?;
        let n = resolution
            .checked_pow(3)
            .ok_or_else(|| Error::config(format!("grid resolution {resolution} is too large")))?;
        Ok(Self {
            resolution,
            aabb: aabb.into(),
            bits: bitvec![u8, Lsb0; value as u8; n],
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn aabb(&self) -> Aabb {
        self.aabb.into()
    }

    pub fn cell_count(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.resolution * (y + self.resolution * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.index(x, y, z);
        self.bits.set(i, v);
    }

    /// Per-axis cell size.
    pub fn voxel_size(&self) -> Vector3<f64> {
        self.aabb().extent() / self.resolution as f64
    }

    pub fn voxel_diagonal(&self) -> f64 {
        self.voxel_size().norm()
    }

    pub fn cell_center(&self, x: usize, y: usize, z: usize) -> Point3<f64> {
        let b = self.aabb();
        let s = self.voxel_size();
        Point3::new(
            b.min[0] + (x as f64 + 0.5) * s.x,
            b.min[1] + (y as f64 + 0.5) * s.y,
            b.min[2] + (z as f64 + 0.5) * s.z,
        )
    }

    /// Cell containing `p`, if inside the bounds.
    pub fn cell_of(&self, p: &Point3<f64>) -> Option<[usize; 3]> {
        let b = self.aabb();
        let s = self.voxel_size();
        let mut out = [0; 3];
        for a in 0..3 {
            let t = ((p[a] - b.min[a]) / s[a]).floor();
            if !(t >= 0.0 && t < self.resolution as f64) {
                return None;
            }
            out[a] = t as usize;
        }
        Some(out)
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    /// Occupied volume in world units.
    pub fn volume(&self) -> f64 {
        let s = self.voxel_size();
        self.occupied_count() as f64 * s.x * s.y * s.z
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let r = self.resolution;
        self.bits.iter_ones().map(move |i| [i % r, (i / r) % r, i / (r * r)])
    }

    /// Coarsens by an integer factor; a coarse cell is occupied when at least
    /// half of its fine cells are.
    pub fn downsample(&self, factor: usize) -> Result<VoxelGrid> {
        if factor == 0 || self.resolution % factor != 0 || self.resolution / factor < 2 {
            return Err(Error::config(format!(
                "cannot downsample resolution {} by {factor}",
                self.resolution
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let r = self.resolution / factor;
        let mut out = VoxelGrid::empty(r, self.aabb())?;
        let need = factor.pow(3);
        for z in 0..r {
            for y in 0..r {
                for x in 0..r {
                    let mut count = 0;
                    for dz in 0..factor {
                        for dy in 0..factor {
                            for dx in 0..factor {
                                count += self.get(x * factor + dx, y * factor + dy, z * factor + dz) as usize;
                            }
                        }
                    }
                    if 2 * count >= need {
                        out.set(x, y, z, true);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Writes `grid.bin` (raw bits) and `grid.json` (resolution and bounds) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
        let bin = dir.join("grid.bin");
        std::fs::write(&bin, self.bits.as_raw_slice()).map_err(|e| Error::from(e).at(&bin))?;
        let header = GridHeader {
            resolution: self.resolution,
            aabb: self.aabb(),
        };
        let json = dir.join("grid.json");
        std::fs::write(&json, serde_json::to_string_pretty(&header)? + "\n").map_err(|e| Error::from(e).at(&json))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<VoxelGrid> {
        let json = dir.join("grid.json");
        let text = std::fs::read_to_string(&json).map_err(|e| Error::from(e).at(&json))?;
        let header: GridHeader = serde_json::from_str(&text).map_err(|e| Error::from(e).at(&json))?;
        let mut grid = VoxelGrid::empty(header.resolution, header.aabb).map_err(|e| e.at(&json))?;
        let bin = dir.join("grid.bin");
        let bytes = std::fs::read(&bin).map_err(|e| Error::from(e).at(&bin))?;
        let expected = grid.cell_count().div_ceil(8);
        if bytes.len() != expected {
            return Err(Error::format("grid", format!("expected {expected} bytes, found {}", bytes.len())).at(&bin));
        }
        let n = grid.cell_count();
        let mut bits = BitVec::<u8, Lsb0>::from_vec(bytes);
        bits.truncate(n);
        grid.bits = bits;
        Ok(grid)
    }
}

/// Visual hull: a cell survives when its center projects in front of every
/// camera, inside the image and onto a foreground pixel.
pub fn carve(views: &[(Camera, Mask)], resolution: usize, aabb: Aabb) -> Result<VoxelGrid> {
    if views.is_empty() {
        return Err(Error::EmptyViews);
    }
    for (cam, mask) in views {
        let cam_dims = (cam.width as usize, cam.height as usize);
        if mask.dims() != cam_dims {
            return Err(Error::DimensionMismatch {
                left: mask.dims(),
                right: cam_dims,
            });
        }
    }
    let mut grid = VoxelGrid::empty(resolution, aabb)?;
    if views.iter().any(|(_, m)| m.is_empty()) {
        return Ok(grid);
    }
    let r = resolution;
    let slabs: Vec<BitVec<u8, Lsb0>> = (0..r)
        .into_par_iter()
        .map(|z| {
            let mut slab = bitvec![u8, Lsb0; 0; r * r];
            for y in 0..r {
                for x in 0..r {
                    let c = grid.cell_center(x, y, z);
                    let keep = views.iter().all(|(cam, mask)| {
                        cam.project(&c)
                            .and_then(|p| cam.pixel_index(&p.pixel))
                            .is_some_and(|(px, py)| mask.get(px, py))
                    });
                    slab.set(x + r * y, keep);
                }
            }
            slab
        })
        .collect();
    for (z, slab) in slabs.iter().enumerate() {
        for i in slab.iter_ones() {
            grid.bits.set(i + r * r * z, true);
        }
    }
    Ok(grid)
}
