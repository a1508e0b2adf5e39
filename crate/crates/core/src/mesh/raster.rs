use nalgebra::Point2;
use rayon::prelude::*;

use super::TexturedMesh;
use crate::geom::Camera;
use crate::image::{Image, Rgb};

const TILE: usize = 16;
pub const NO_FACE: u32 = u32::MAX;

/// Rendered colors plus the visibility buffer that makes shading
/// differentiable in the vertex colors.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshRender {
    pub image: Image,
    pub fragments: Fragments,
}

/// Per-pixel visible face (`NO_FACE` for background) and perspective-correct
/// barycentric weights. Depends on geometry and camera only.
#[derive(Clone, Debug, PartialEq)]
pub struct Fragments {
    pub width: usize,
    pub height: usize,
    pub face: Vec<u32>,
    pub bary: Vec<[f64; 3]>,
}

impl Fragments {
    pub fn covered(&self) -> usize {
        self.face.iter().filter(|&&f| f != NO_FACE).count()
    }

    /// Interpolated vertex colors over `background`.
    pub fn shade(&self, tm: &TexturedMesh, background: Rgb) -> Image {
        let mut data = vec![0.0; self.face.len() * 3];
        data.par_chunks_mut(3).enumerate().for_each(|(i, px)| {
            let f = self.face[i];
            if f == NO_FACE {
                px.copy_from_slice(&background);
                return;
            }
            let tri = tm.mesh.faces[f as usize];
            let b = self.bary[i];
            for c in 0..3 {
                px[c] = (0..3).map(|k| b[k] * tm.colors[tri[k] as usize][c]).sum();
            }
        });
        Image::from_raw(self.width, self.height, data).expect("buffer sized from fragments")
    }

    /// Vertex-color gradient from an image-space gradient. Pixels are
    /// accumulated in raster order so the result is reproducible.
    pub fn color_backward(&self, tm: &TexturedMesh, dl: &Image) -> Vec<Rgb> {
        let mut grad = vec![[0.0; 3]; tm.colors.len()];
        let g = dl.as_slice();
        for (i, &f) in self.face.iter().enumerate() {
            if f == NO_FACE {
                continue;
            }
            let tri = tm.mesh.faces[f as usize];
            let b = self.bary[i];
            for k in 0..3 {
                let dst = &mut grad[tri[k] as usize];
                for c in 0..3 {
                    dst[c] += b[k] * g[3 * i + c];
                }
            }
        }
        grad
    }
}

struct ScreenTri {
    p: [Point2<f64>; 3],
    inv_z: [f64; 3],
    /// Twice the signed screen area.
    area2: f64,
}

fn edge(a: &Point2<f64>, b: &Point2<f64>, p: &Point2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Hard z-buffer visibility. Faces with a vertex at or behind the near plane
/// are skipped; depth ties go to the lower face index.
pub fn rasterize_fragments(tm: &TexturedMesh, cam: &Camera) -> Fragments {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let (tiles_x, tiles_y) = (w.div_ceil(TILE), h.div_ceil(TILE));
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    let mut tris = Vec::with_capacity(tm.mesh.faces.len());
    for f in &tm.mesh.faces {
        let proj: Vec<_> = f.iter().filter_map(|&v| cam.project(&tm.mesh.vertices[v as usize])).collect();
        if proj.len() < 3 {
            tris.push(None);
            continue;
        }
        let p = [proj[0].pixel, proj[1].pixel, proj[2].pixel];
        let area2 = edge(&p[0], &p[1], &p[2]);
        if area2 == 0.0 || !area2.is_finite() {
            tris.push(None);
            continue;
        }
        let lo_x = p.iter().map(|q| q.x).fold(f64::INFINITY, f64::min);
        let hi_x = p.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max);
        let lo_y = p.iter().map(|q| q.y).fold(f64::INFINITY, f64::min);
        let hi_y = p.iter().map(|q| q.y).fold(f64::NEG_INFINITY, f64::max);
        // pixel centers sit at i + 0.5
        let x0 = (lo_x - 0.5).ceil().max(0.0);
        let x1 = (hi_x - 0.5).floor().min(w as f64 - 1.0);
        let y0 = (lo_y - 0.5).ceil().max(0.0);
        let y1 = (hi_y - 0.5).floor().min(h as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            tris.push(None);
            continue;
        }
        let id = tris.len() as u32;
        for ty in (y0 as usize / TILE)..=(y1 as usize / TILE) {
            for tx in (x0 as usize / TILE)..=(x1 as usize / TILE) {
                bins[ty * tiles_x + tx].push(id);
            }
        }
        tris.push(Some(ScreenTri {
            p,
            inv_z: [1.0 / proj[0].depth, 1.0 / proj[1].depth, 1.0 / proj[2].depth],
            area2,
        }));
    }

    let tile_results: Vec<(Vec<u32>, Vec<[f64; 3]>)> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|t| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let (bx, by) = (tx * TILE, ty * TILE);
            let (bw, bh) = (TILE.min(w - bx), TILE.min(h - by));
            let mut face = vec![NO_FACE; bw * bh];
            let mut bary = vec![[0.0; 3]; bw * bh];
            let mut depth = vec![f64::INFINITY; bw * bh];
            for &id in &bins[t] {
                let tri = tris[id as usize].as_ref().unwrap();
                for ly in 0..bh {
                    for lx in 0..bw {
                        let q = Point2::new((bx + lx) as f64 + 0.5, (by + ly) as f64 + 0.5);
                        let l = [
                            edge(&tri.p[1], &tri.p[2], &q) / tri.area2,
                            edge(&tri.p[2], &tri.p[0], &q) / tri.area2,
                            edge(&tri.p[0], &tri.p[1], &q) / tri.area2,
                        ];
                        if l.iter().any(|&v| v < 0.0) {
                            continue;
                        }
                        let wsum = l[0] * tri.inv_z[0] + l[1] * tri.inv_z[1] + l[2] * tri.inv_z[2];
                        let z = 1.0 / wsum;
                        let j = ly * bw + lx;
                        if z < depth[j] {
                            depth[j] = z;
                            face[j] = id;
                            bary[j] = [0, 1, 2].map(|k| l[k] * tri.inv_z[k] * z);
                        }
                    }
                }
            }
            (face, bary)
        })
        .collect();

    let mut out = Fragments {
        width: w,
        height: h,
        face: vec![NO_FACE; w * h],
        bary: vec![[0.0; 3]; w * h],
    };
    for (t, (face, bary)) in tile_results.into_iter().enumerate() {
        let (bx, by) = ((t % tiles_x) * TILE, (t / tiles_x) * TILE);
        let bw = TILE.min(w - bx);
        for (j, (f, b)) in face.into_iter().zip(bary).enumerate() {
            let i = (by + j / bw) * w + bx + j % bw;
            out.face[i] = f;
            out.bary[i] = b;
        }
    }
    out
}

pub fn rasterize_mesh(tm: &TexturedMesh, cam: &Camera, background: Rgb) -> MeshRender {
    let fragments = rasterize_fragments(tm, cam);
    MeshRender {
        image: fragments.shade(tm, background),
        fragments,
    }
}
