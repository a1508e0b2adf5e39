//! Image and geometry metrics.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PointSet;
use crate::image::{Image, Mask};

pub const PSNR_CAP: f64 = 100.0;

/// Above this many point pairs the chamfer distance uses a spatial grid.
pub const BRUTE_FORCE_LIMIT: usize = 1_000_000;

pub fn psnr(img: &Image, gt: &Image) -> Result<f64> {
    let m = crate::loss::mse(img, gt)?.value;
    if m < 1e-10 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

/// Mean SSIM over channels.
pub fn ssim_metric(img: &Image, gt: &Image) -> Result<f64> {
    crate::loss::ssim(img, gt)
}

pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Symmetric chamfer distance with squared nearest-neighbor distances.
pub fn chamfer(a: &PointSet, b: &PointSet) -> Result<f64> {
    if a.len().saturating_mul(b.len()) <= BRUTE_FORCE_LIMIT {
        chamfer_brute(a, b)
    } else {
        chamfer_grid(a, b)
    }
}

fn check_nonempty(a: &PointSet, b: &PointSet) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    Ok(())
}

#[inline]
fn dist2(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let d = a - b;
    d.x * d.x + d.y * d.y + d.z * d.z
}

fn mean_in_order(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn chamfer_brute(a: &PointSet, b: &PointSet) -> Result<f64> {
    check_nonempty(a, b)?;
    let nearest = |from: &[Point3<f64>], to: &[Point3<f64>]| -> Vec<f64> {
        from.par_iter()
            .map(|p| to.iter().map(|q| dist2(p, q)).fold(f64::INFINITY, f64::min))
            .collect()
    };
    Ok(mean_in_order(&nearest(&a.points, &b.points)) + mean_in_order(&nearest(&b.points, &a.points)))
}

pub fn chamfer_grid(a: &PointSet, b: &PointSet) -> Result<f64> {
    check_nonempty(a, b)?;
    let ga = PointGrid::new(&a.points);
    let gb = PointGrid::new(&b.points);
    let da: Vec<f64> = a.points.par_iter().map(|p| gb.nearest_dist2(p)).collect();
    let db: Vec<f64> = b.points.par_iter().map(|p| ga.nearest_dist2(p)).collect();
    Ok(mean_in_order(&da) + mean_in_order(&db))
}

/// Uniform bucket grid for exact nearest-neighbor queries.
pub struct PointGrid<'a> {
    points: &'a [Point3<f64>],
    origin: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    order: Vec<u32>,
}

impl<'a> PointGrid<'a> {
    pub fn new(points: &'a [Point3<f64>]) -> Self {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(&p.coords);
            hi = hi.sup(&p.coords);
        }
        let extent = (hi - lo).map(|v| v.max(1e-12));
        // about two points per cell
        let volume = extent.x * extent.y * extent.z;
        let cell = (volume * 2.0 / points.len().max(1) as f64).cbrt().max(extent.max() / 1024.0);
        let dims = [0, 1, 2].map(|a| ((extent[a] / cell).floor() as usize + 1).min(1024));
        let mut grid = Self {
            points,
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            order: Vec::new(),
        };
        let n_cells = dims[0] * dims[1] * dims[2];
        let keys: Vec<usize> = points.iter().map(|p| grid.flat(grid.cell_of(p))).collect();
        let mut counts = vec![0usize; n_cells + 1];
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k]] = i as u32;
            fill[k] += 1;
        }
        grid.starts = counts;
        grid.order = order;
        grid
    }

    fn cell_of(&self, p: &Point3<f64>) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let t = ((p[a] - self.origin[a]) / self.cell).floor();
            t.clamp(0.0, (self.dims[a] - 1) as f64) as usize
        })
    }

    #[inline]
    fn flat(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    /// Squared distance to the nearest stored point.
    pub fn nearest_dist2(&self, q: &Point3<f64>) -> f64 {
        self.nearest_skipping(q, None)
    }

    /// Squared distance from stored point `i` to its nearest other point.
    pub fn nearest_other_dist2(&self, i: usize) -> f64 {
        self.nearest_skipping(&self.points[i], Some(i as u32))
    }

    fn nearest_skipping(&self, q: &Point3<f64>, skip: Option<u32>) -> f64 {
        let c = self.cell_of(q);
        let mut best = f64::INFINITY;
        let max_ring = *self.dims.iter().max().unwrap();
        for r in 0..=max_ring {
            let lo = c.map(|v| v as i64 - r as i64);
            let hi = c.map(|v| v as i64 + r as i64);
            for z in lo[2].max(0)..=hi[2].min(self.dims[2] as i64 - 1) {
                for y in lo[1].max(0)..=hi[1].min(self.dims[1] as i64 - 1) {
                    for x in lo[0].max(0)..=hi[0].min(self.dims[0] as i64 - 1) {
                        let on_shell = [x, y, z].iter().zip(lo.iter().zip(&hi)).any(|(v, (l, h))| v == l || v == h);
                        if !on_shell {
                            continue;
                        }
                        let k = self.flat([x as usize, y as usize, z as usize]);
                        for &i in &self.order[self.starts[k]..self.starts[k + 1]] {
                            if Some(i) != skip {
                                best = best.min(dist2(q, &self.points[i as usize]));
                            }
                        }
                    }
                }
            }
            // everything not yet visited lies outside this block of cells
            let mut bound = f64::INFINITY;
            let mut covers_all = true;
            for a in 0..3 {
                let block_lo = self.origin[a] + lo[a] as f64 * self.cell;
                let block_hi = self.origin[a] + (hi[a] + 1) as f64 * self.cell;
                if lo[a] > 0 {
                    covers_all = false;
                    bound = bound.min(q[a] - block_lo);
                }
                if hi[a] < self.dims[a] as i64 - 1 {
                    covers_all = false;
                    bound = bound.min(block_hi - q[a]);
                }
            }
            if covers_all {
                break;
            }
            if bound > 0.0 && best <= bound * bound {
                break;
            }
        }
        best
    }
}

/// Per-run metric record; fields that were not computed serialize as null.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub perceptual: Option<f64>,
    pub chamfer: Option<f64>,
    pub n_points: Option<usize>,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
