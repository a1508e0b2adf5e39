//! Triangle meshes, hull-based extraction and vertex-color refinement.

mod raster;
mod refine;
pub(crate) mod trimesh;

pub use raster::{rasterize_fragments, rasterize_mesh, Fragments, MeshRender, NO_FACE};
pub use refine::{refine_texture, refine_texture_with, vertex_color_error, RefineConfig, RefineResult};
pub use trimesh::TriMesh;

use crate::error::{Error, Result};
use crate::grid::{marching_cubes, VoxelGrid};
use crate::image::Rgb;

pub const SMOOTH_STEP: f64 = 0.5;
pub const DEFAULT_SMOOTH_ITERS: usize = 5;
/// Starting color for refinement.
pub const INIT_GRAY: Rgb = [0.5; 3];

/// Mesh with one RGB color per vertex.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TexturedMesh {
    pub mesh: TriMesh,
    pub colors: Vec<Rgb>,
}

impl TexturedMesh {
    pub fn new(mesh: TriMesh, colors: Vec<Rgb>) -> Result<Self> {
        let tm = Self { mesh, colors };
        tm.validate()?;
        Ok(tm)
    }

    pub fn uniform(mesh: TriMesh, color: Rgb) -> Self {
        let colors = vec![color; mesh.vertices.len()];
        Self { mesh, colors }
    }

    pub fn validate(&self) -> Result<()> {
        self.mesh.validate()?;
        if self.colors.len() != self.mesh.vertices.len() {
            return Err(Error::ShapeMismatch {
                what: "vertex colors",
                expected: self.mesh.vertices.len(),
                got: self.colors.len(),
            });
        }
        if let Some(i) = self.colors.iter().position(|c| !c.iter().all(|v| (0.0..=1.0).contains(v))) {
            return Err(Error::format("mesh", format!("vertex color {i} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Marching cubes on the occupancy grid, Laplacian smoothing, then removal
/// of faces that collapsed.
pub fn extract_mesh(grid: &VoxelGrid, smooth_iters: usize) -> Result<TriMesh> {
    let mut mesh = marching_cubes(grid, 0.5)?;
    if smooth_iters > 0 {
        mesh.laplacian_smooth(smooth_iters, SMOOTH_STEP);
        mesh.remove_degenerate_faces();
    }
    Ok(mesh)
}
