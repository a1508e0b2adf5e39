//! Multi-view object reconstruction toolkit.
//!
//! The pipeline turns a set of posed views of a single object into 3D
//! Gaussians and a vertex-colored mesh:
//!
//! 1. [`grid::carve`] builds a visual hull from foreground masks,
//! 2. [`grid::marching_cubes`] and [`grid::sample_surface`] seed Gaussians on
//!    the hull surface,
//! 3. [`optim::reconstruct`] fits the Gaussians with Adam under the composite
//!    image loss in [`loss`],
//! 4. [`mesh::extract_mesh`] and [`mesh::refine_texture`] produce a textured
//!    mesh with frozen geometry.
//!
//! [`synth`] renders analytic SDF scenes into posed datasets so every stage
//! can be checked against ground truth, and [`eval`] holds the image and
//! geometry metrics.

pub mod cli;
pub mod error;
pub mod eval;
pub mod geom;
pub mod grid;
pub mod image;
pub mod io;
pub mod loss;
pub mod mesh;
pub mod optim;
pub mod protocol;
pub mod splat;
pub mod synth;

pub use error::{Error, Result};
pub use geom::{Camera, OrbitConfig};
pub use grid::{PointSet, VoxelGrid};
pub use image::{Image, Mask, Rgb};
pub use loss::LossWeights;
pub use mesh::{TexturedMesh, TriMesh};
pub use optim::ReconConfig;
pub use splat::GaussianSet;
pub use synth::{SdfScene, ViewSet};
