//! Differentiable Gaussian splatting: EWA projection, tiled front-to-back
//! compositing and the matching analytic backward pass.

mod gaussians;
mod raster;

pub use gaussians::{logit, quat_to_matrix, quat_to_matrix_backward, sigmoid, Gaussian, GaussianGrads, GaussianSet};
pub use raster::{
    backward_from, center_depth, project_gaussian, project_gaussian_with, rasterize, rasterize_backward,
    rasterize_with, ProjectedGaussian, RasterSettings, RenderAux, RenderOutput,
};
