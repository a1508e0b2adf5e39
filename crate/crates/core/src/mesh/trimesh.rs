use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Indexed triangle mesh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = Self { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some((i, f)) = self
            .faces
            .iter()
            .enumerate()
            .find(|(_, f)| f.iter().any(|&v| v as usize >= n))
        {
            return Err(Error::format("mesh", format!("face {i} {f:?} indexes past {n} vertices")));
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::format("mesh", format!("vertex {i} is not finite")));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, f: usize) -> [Point3<f64>; 3] {
        self.faces[f].map(|v| self.vertices[v as usize])
    }

    /// Unnormalized normal, twice the area in length.
    pub fn face_cross(&self, f: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_cross(f).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Volume enclosed by a closed, outward-oriented mesh (negative if inward).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|v| self.vertices[v as usize].coords);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Number of faces using each undirected edge.
    pub fn edge_incidence(&self) -> HashMap<(u32, u32), usize> {
        let mut map = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *map.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        map
    }

    /// Every edge shared by exactly two faces, traversed once in each direction.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let mut directed: HashMap<(u32, u32), i32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *directed.entry((a, b)).or_insert(0) += 1;
            }
        }
        directed.iter().all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// V - E + F counting only referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &v in f {
                used[v as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_incidence().len() as i64 + self.faces.len() as i64
    }

    /// Number of connected components over faces.
    pub fn component_count(&self) -> usize {
        let mut parent: Vec<u32> = (0..self.vertices.len() as u32).collect();
        fn find(p: &mut [u32], mut x: u32) -> u32 {
            while p[x as usize] != x {
                p[x as usize] = p[p[x as usize] as usize];
                x = p[x as usize];
            }
            x
        }
        for f in &self.faces {
            for k in 1..3 {
                let (a, b) = (find(&mut parent, f[0]), find(&mut parent, f[k]));
                if a != b {
                    parent[a.max(b) as usize] = a.min(b);
                }
            }
        }
        let mut roots: Vec<u32> = self.faces.iter().map(|f| find(&mut parent, f[0])).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    /// Drops faces with repeated indices or zero area. Vertices are kept so
    /// indices stay stable.
    pub fn remove_degenerate_faces(&mut self) -> usize {
        let before = self.faces.len();
        let verts = &self.vertices;
        self.faces.retain(|f| {
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return false;
            }
            let [a, b, c] = f.map(|v| verts[v as usize]);
            (b - a).cross(&(c - a)).norm_squared() > 0.0
        });
        before - self.faces.len()
    }

    /// Vertex neighbor lists in ascending order.
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                nb[a as usize].push(b);
                nb[b as usize].push(a);
            }
        }
        for list in nb.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    /// Uniform-weight Laplacian smoothing: `v += step * (mean(neighbors) - v)`.
    pub fn laplacian_smooth(&mut self, iterations: usize, step: f64) {
        if iterations == 0 {
            return;
        }
        let nb = self.vertex_neighbors();
        for _ in 0..iterations {
            let prev = self.vertices.clone();
            for (v, list) in self.vertices.iter_mut().zip(&nb) {
                if list.is_empty() {
                    continue;
                }
                let mean = list.iter().fold(Vector3::zeros(), |acc, &n| acc + prev[n as usize].coords)
                    / list.len() as f64;
                *v += (mean - v.coords) * step;
            }
        }
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut n = vec![Vector3::zeros(); self.vertices.len()];
        for (i, f) in self.faces.iter().enumerate() {
            let c = self.face_cross(i);
            for &v in f {
                n[v as usize] += c;
            }
        }
        n.iter().map(|v| v.try_normalize(0.0).unwrap_or_else(Vector3::zeros)).collect()
    }
}

#[cfg(test)]
pub(crate) fn unit_cube() -> TriMesh {
    let v: Vec<Point3<f64>> = (0..8)
        .map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let mut faces = Vec::new();
    for q in quads {
        faces.push([q[0], q[1], q[2]]);
        faces.push([q[0], q[2], q[3]]);
    }
    TriMesh::new(v, faces).unwrap()
}
