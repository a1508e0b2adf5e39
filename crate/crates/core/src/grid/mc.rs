//! Marching cubes over cell-centered samples.
//!
//! The 256-case table is generated at first use. On each cube face the
//! crossing points are joined into segments, with ambiguous faces always
//! separating their two inside corners; since neighbouring cubes see the
//! same face the same way, the segments chain into closed loops that match
//! across cubes and the output is watertight by construction.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::{Aabb, VoxelGrid};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Samples at cell centers with the same layout as [`VoxelGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub resolution: usize,
    pub aabb: Aabb,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn from_grid(grid: &VoxelGrid) -> Self {
        let r = grid.resolution();
        let mut values = vec![0.0; r * r * r];
        for [x, y, z] in grid.occupied_cells() {
            values[grid.index(x, y, z)] = 1.0;
        }
        Self {
            resolution: r,
            aabb: grid.aabb(),
            values,
        }
    }

    /// Value at padded lattice coordinates; the outer layer is zero.
    #[inline]
    fn padded(&self, x: usize, y: usize, z: usize) -> f64 {
        let r = self.resolution;
        if x == 0 || y == 0 || z == 0 || x > r || y > r || z > r {
            return 0.0;
        }
        self.values[(x - 1) + r * ((y - 1) + r * (z - 1))]
    }
}

/// 3x3x3 mean of the occupancy, treating outside cells as empty.
pub fn box_filtered(grid: &VoxelGrid) -> ScalarField {
    let src = ScalarField::from_grid(grid);
    let r = grid.resolution();
    let mut values = vec![0.0; r * r * r];
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                let mut sum = 0.0;
                for dz in 0..3 {
                    for dy in 0..3 {
                        for dx in 0..3 {
                            sum += src.padded(x + dx, y + dy, z + dz);
                        }
                    }
                }
                values[x + r * (y + r * z)] = sum / 27.0;
            }
        }
    }
    ScalarField {
        resolution: r,
        aabb: grid.aabb(),
        values,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TriVertex {
    Edge(u8),
    Centroid(u8),
}

#[derive(Clone, Debug, Default)]
struct Case {
    loops: Vec<Vec<u8>>,
    triangles: Vec<[TriVertex; 3]>,
}

const CORNER_OFFSETS: [[usize; 3]; 8] = {
    let mut out = [[0; 3]; 8];
    let mut c = 0;
    while c < 8 {
        out[c] = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
        c += 1;
    }
    out
};

/// `(lower corner, axis)` for the 12 cube edges.
fn cube_edges() -> &'static [(usize, usize); 12] {
    static EDGES: OnceLock<[(usize, usize); 12]> = OnceLock::new();
    EDGES.get_or_init(|| {
        let mut out = [(0, 0); 12];
        let mut k = 0;
        for axis in 0..3 {
            for c in 0..8 {
                if c & (1 << axis) == 0 {
                    out[k] = (c, axis);
                    k += 1;
                }
            }
        }
        out
    })
}

fn edge_between(a: usize, b: usize) -> u8 {
    let (lo, hi) = (a.min(b), a.max(b));
    let axis = (hi ^ lo).trailing_zeros() as usize;
    cube_edges()
        .iter()
        .position(|&(c, ax)| c == lo && ax == axis)
        .expect("corners are adjacent") as u8
}

fn edge_midpoint(e: u8) -> Vector3<f64> {
    let (c, axis) = cube_edges()[e as usize];
    let mut p = Vector3::from_fn(|a, _| CORNER_OFFSETS[c][a] as f64);
    p[axis] += 0.5;
    p
}

fn edges_share_face(a: u8, b: u8) -> bool {
    let ea = cube_edges()[a as usize];
    let eb = cube_edges()[b as usize];
    let corners = [ea.0, ea.0 | 1 << ea.1, eb.0, eb.0 | 1 << eb.1];
    (0..3).any(|axis| {
        let bit = corners[0] >> axis & 1;
        corners.iter().all(|&c| c >> axis & 1 == bit)
    })
}

fn build_case(inside: u8) -> Case {
    let is_in = |c: usize| inside >> c & 1 == 1;
    // (from edge, to edge)
    let mut segments: Vec<(u8, u8)> = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let (u, v) = (u.min(v), u.max(v));
        for side in 0..2 {
            let base = side << axis;
            let cyc = [base, base | 1 << u, base | 1 << u | 1 << v, base | 1 << v];
            let normal = {
                let mut n = Vector3::zeros();
                n[axis] = if side == 1 { 1.0 } else { -1.0 };
                n
            };
            let crossings: Vec<usize> = (0..4).filter(|&i| is_in(cyc[i]) != is_in(cyc[(i + 1) % 4])).collect();
            let mut pairs: Vec<(u8, u8, usize)> = Vec::new();
            match crossings.len() {
                0 => {}
                2 => {
                    let e0 = edge_between(cyc[crossings[0]], cyc[(crossings[0] + 1) % 4]);
                    let e1 = edge_between(cyc[crossings[1]], cyc[(crossings[1] + 1) % 4]);
                    let ci = *cyc.iter().find(|&&c| is_in(c)).expect("a crossing face has an inside corner");
                    pairs.push((e0, e1, ci));
                }
                4 => {
                    for i in 0..4 {
                        if is_in(cyc[i]) {
                            let e0 = edge_between(cyc[(i + 3) % 4], cyc[i]);
                            let e1 = edge_between(cyc[i], cyc[(i + 1) % 4]);
                            pairs.push((e0, e1, cyc[i]));
                        }
                    }
                }
                _ => unreachable!("a face has an even number of sign changes"),
            }
            for (e0, e1, ci) in pairs {
                let p = edge_midpoint(e0);
                let q = edge_midpoint(e1);
                let c = Vector3::from_fn(|a, _| CORNER_OFFSETS[ci][a] as f64);
                if (q - p).cross(&(c - p)).dot(&normal) < 0.0 {
                    segments.push((e0, e1));
                } else {
                    segments.push((e1, e0));
                }
            }
        }
    }

    let mut next: HashMap<u8, u8> = HashMap::new();
    for &(a, b) in &segments {
        let prev = next.insert(a, b);
        assert!(prev.is_none(), "edge {a} starts two segments");
    }
    let mut starts: Vec<u8> = next.keys().copied().collect();
    starts.sort_unstable();
    let mut used = [false; 12];
    let mut case = Case::default();
    for s in starts {
        if used[s as usize] {
            continue;
        }
        let mut lp = vec![s];
        used[s as usize] = true;
        let mut cur = next[&s];
        while cur != s {
            used[cur as usize] = true;
            lp.push(cur);
            cur = next[&cur];
        }
        let li = case.loops.len() as u8;
        let e = |i: usize| TriVertex::Edge(lp[i]);
        match lp.len() {
            3 => case.triangles.push([e(0), e(1), e(2)]),
            4 if !edges_share_face(lp[0], lp[2]) => {
                case.triangles.push([e(0), e(1), e(2)]);
                case.triangles.push([e(0), e(2), e(3)]);
            }
            4 if !edges_share_face(lp[1], lp[3]) => {
                case.triangles.push([e(1), e(2), e(3)]);
                case.triangles.push([e(1), e(3), e(0)]);
            }
            n => {
                for i in 0..n {
                    case.triangles.push([TriVertex::Centroid(li), e(i), e((i + 1) % n)]);
                }
            }
        }
        case.loops.push(lp);
    }
    case
}

fn case_table() -> &'static [Case] {
    static TABLE: OnceLock<Vec<Case>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=255u8).map(build_case).collect())
}

#[derive(Default)]
struct Slab {
    /// Global edge key, or `None` for a loop centroid.
    keys: Vec<Option<u64>>,
    positions: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
}

/// Marching cubes on the occupancy grid as a {0, 1} field.
pub fn marching_cubes(grid: &VoxelGrid, iso: f64) -> Result<TriMesh> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if !(iso > 0.0 && iso < 1.0) {
        return Err(Error::config(format!("iso level {iso} must lie strictly between 0 and 1")));
    }
    marching_cubes_field(&ScalarField::from_grid(grid), iso)
}

/// Marching cubes on an arbitrary cell-centered field; a sample is inside
/// when it exceeds `iso`. The field is zero-padded by one layer.
pub fn marching_cubes_field(field: &ScalarField, iso: f64) -> Result<TriMesh> {
    let r = field.resolution;
    if field.values.len() != r * r * r {
        return Err(Error::ShapeMismatch {
            what: "scalar field",
            expected: r * r * r,
            got: field.values.len(),
        });
    }
    if !iso.is_finite() {
        return Err(Error::config("iso level must be finite"));
    }
    field.aabb.validate()?;
    let table = case_table();
    let edges = cube_edges();
    let lattice = r + 2;
    let step = field.aabb.extent() / r as f64;
    let origin = Vector3::from_fn(|a, _| field.aabb.min[a] - 0.5 * step[a]);
    let lattice_point = |p: [usize; 3]| Point3::from(origin + Vector3::from_fn(|a, _| p[a] as f64 * step[a]));

    let slabs: Vec<Slab> = (0..=r)
        .into_par_iter()
        .map(|k| {
            let mut slab = Slab::default();
            let mut local: HashMap<u64, u32> = HashMap::new();
            for j in 0..=r {
                for i in 0..=r {
                    let mut values = [0.0; 8];
                    let mut case = 0u8;
                    for (c, off) in CORNER_OFFSETS.iter().enumerate() {
                        values[c] = field.padded(i + off[0], j + off[1], k + off[2]);
                        if values[c] > iso {
                            case |= 1 << c;
                        }
                    }
                    if case == 0 || case == 255 {
                        continue;
                    }
                    let entry = &table[case as usize];
                    let mut vertex_of = |e: u8, slab: &mut Slab| -> u32 {
                        let (c, axis) = edges[e as usize];
                        let lo = [i + CORNER_OFFSETS[c][0], j + CORNER_OFFSETS[c][1], k + CORNER_OFFSETS[c][2]];
                        let key = ((lo[0] + lattice * (lo[1] + lattice * lo[2])) * 3 + axis) as u64;
                        *local.entry(key).or_insert_with(|| {
                            let mut hi = lo;
                            hi[axis] += 1;
                            let (va, vb) = (values[c], values[c | 1 << axis]);
                            let t = (iso - va) / (vb - va);
                            let pa = lattice_point(lo);
                            let pb = lattice_point(hi);
                            slab.keys.push(Some(key));
                            slab.positions.push(pa + (pb - pa) * t);
                            (slab.positions.len() - 1) as u32
                        })
                    };
                    let mut loop_ids: Vec<Vec<u32>> = Vec::with_capacity(entry.loops.len());
                    for lp in &entry.loops {
                        loop_ids.push(lp.iter().map(|&e| vertex_of(e, &mut slab)).collect());
                    }
                    let mut centroids: Vec<Option<u32>> = vec![None; entry.loops.len()];
                    for tri in &entry.triangles {
                        let mut out = [0u32; 3];
                        for (o, tv) in out.iter_mut().zip(tri) {
                            *o = match *tv {
                                TriVertex::Edge(e) => vertex_of(e, &mut slab),
                                TriVertex::Centroid(l) => *centroids[l as usize].get_or_insert_with(|| {
                                    let ids = &loop_ids[l as usize];
                                    let sum = ids.iter().fold(Vector3::zeros(), |acc, &v| {
                                        acc + slab.positions[v as usize].coords
                                    });
                                    slab.keys.push(None);
                                    slab.positions.push(Point3::from(sum / ids.len() as f64));
                                    (slab.positions.len() - 1) as u32
                                }),
                            };
                        }
                        slab.triangles.push(out);
                    }
                }
            }
            slab
        })
        .collect();

    // deterministic merge in slab order
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut global: HashMap<u64, u32> = HashMap::new();
    for slab in slabs {
        let remap: Vec<u32> = slab
            .keys
            .iter()
            .zip(&slab.positions)
            .map(|(key, p)| match key {
                Some(k) => *global.entry(*k).or_insert_with(|| {
                    vertices.push(*p);
                    (vertices.len() - 1) as u32
                }),
                None => {
                    vertices.push(*p);
                    (vertices.len() - 1) as u32
                }
            })
            .collect();
        faces.extend(slab.triangles.iter().map(|t| t.map(|v| remap[v as usize])));
    }
    TriMesh::new(vertices, faces)
}
