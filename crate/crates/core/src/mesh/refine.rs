use serde::{Deserialize, Serialize};

use super::raster::{rasterize_fragments, Fragments};
use super::TexturedMesh;
use crate::error::{Error, Result};
use crate::image::{Rgb, WHITE};
use crate::loss::{recon_loss_with, LossWeights, Perceptual, StructuralProxy};
use crate::optim::{adam_step, AdamParams, AdamState, LossRecord};
use crate::synth::{SdfScene, ViewSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub adam: AdamParams,
    pub loss: LossWeights,
    pub background: Rgb,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            learning_rate: 1e-2,
            adam: AdamParams::default(),
            loss: LossWeights::default(),
            background: WHITE,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("refinement learning_rate must be positive"));
        }
        self.adam.validate()?;
        self.loss.validate()?;
        if !self.background.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::config("background must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineResult {
    pub mesh: TexturedMesh,
    pub trace: Vec<LossRecord>,
}

pub fn refine_texture(tm: &TexturedMesh, views: &ViewSet, cfg: &RefineConfig) -> Result<RefineResult> {
    refine_texture_with(tm, views, cfg, &StructuralProxy::default())
}

/// Optimizes vertex colors only; the geometry is cloned untouched. Views are
/// visited round-robin and colors are clamped after every step.
pub fn refine_texture_with(
    tm: &TexturedMesh,
    views: &ViewSet,
    cfg: &RefineConfig,
    perceptual: &dyn Perceptual,
) -> Result<RefineResult> {
    cfg.validate()?;
    tm.validate()?;
    if views.is_empty() {
        return Err(Error::EmptyViews);
    }
    views.validate()?;
    // geometry is frozen, so visibility is computed once per view
    let fragments: Vec<Fragments> = views.views.iter().map(|v| rasterize_fragments(tm, &v.camera)).collect();
    if fragments.iter().all(|f| f.covered() == 0) {
        return Err(Error::NotVisible);
    }
    let mut out = tm.clone();
    let mut flat: Vec<f64> = out.colors.iter().flatten().copied().collect();
    let mut state = AdamState::new(flat.len(), cfg.adam);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let k = step % views.len();
        let img = fragments[k].shade(&out, cfg.background);
        let loss = recon_loss_with(&img, &views.views[k].image, &cfg.loss, perceptual)?;
        let grad: Vec<f64> = fragments[k].color_backward(&out, &loss.grad).into_iter().flatten().collect();
        adam_step(&mut flat, &grad, &mut state, cfg.learning_rate)?;
        for (c, v) in out.colors.iter_mut().zip(flat.chunks_exact_mut(3)) {
            for i in 0..3 {
                v[i] = v[i].clamp(0.0, 1.0);
                c[i] = v[i];
            }
        }
        trace.push(LossRecord {
            iteration: step,
            mse: loss.mse,
            dssim: loss.dssim,
            perceptual: loss.perceptual,
            total: loss.total,
        });
    }
    Ok(RefineResult { mesh: out, trace })
}

/// Mean over vertices of the mean absolute channel difference to the
/// scene's own surface color at that point.
pub fn vertex_color_error(tm: &TexturedMesh, scene: &SdfScene) -> f64 {
    if tm.colors.is_empty() {
        return 0.0;
    }
    let sum: f64 = tm
        .mesh
        .vertices
        .iter()
        .zip(&tm.colors)
        .map(|(v, c)| {
            let t = scene.eval(v).color;
            (0..3).map(|i| (c[i] - t[i]).abs()).sum::<f64>() / 3.0
        })
        .sum();
    sum / tm.colors.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{orbit_cameras, OrbitConfig};
    use crate::image::Mask;
    use crate::mesh::trimesh::unit_cube;
    use crate::mesh::rasterize_mesh;
    use crate::synth::View;
    use nalgebra::Vector3;

    fn cube() -> TexturedMesh {
        let mut mesh = unit_cube();
        for v in mesh.vertices.iter_mut() {
            *v -= Vector3::repeat(0.5);
            v.coords *= 0.5;
        }
        let colors = (0..8).map(|i| [0.2 + 0.08 * i as f64, 0.5, 0.8 - 0.05 * i as f64]).collect();
        TexturedMesh::new(mesh, colors).unwrap()
    }

    fn views_of(tm: &TexturedMesh, n: usize) -> ViewSet {
        let cams = orbit_cameras(&OrbitConfig {
            n_views: n,
            resolution: 32,
            ..Default::default()
        })
        .unwrap();
        ViewSet::new(
            cams.into_iter()
                .map(|camera| {
                    let image = rasterize_mesh(tm, &camera, WHITE).image;
                    View {
                        mask: Mask::new(32, 32),
                        image,
                        depth: None,
                        camera,
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn self_rendered_views_are_a_fixed_point() {
        let tm = cube();
        let views = views_of(&tm, 6);
        let r = refine_texture(&tm, &views, &RefineConfig::default()).unwrap();
        assert_eq!(r.mesh.mesh, tm.mesh);
        for (a, b) in r.mesh.colors.iter().zip(&tm.colors) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1.0 / 255.0);
            }
        }
    }

    #[test]
    fn geometry_is_bit_identical_and_colors_move() {
        let target = cube();
        let views = views_of(&target, 6);
        let gray = TexturedMesh::uniform(target.mesh.clone(), [0.5; 3]);
        let r = refine_texture(&gray, &views, &RefineConfig::default()).unwrap();
        let bits = |m: &TexturedMesh| -> Vec<u64> { m.mesh.vertices.iter().flat_map(|v| v.iter().map(|c| c.to_bits())).collect() };
        assert_eq!(bits(&r.mesh), bits(&gray));
        assert_eq!(r.mesh.mesh.faces, gray.mesh.faces);
        let err = |m: &TexturedMesh| -> f64 {
            m.colors.iter().zip(&target.colors).map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).abs()).sum::<f64>()).sum()
        };
        assert!(err(&r.mesh) < 0.5 * err(&gray));
        assert_eq!(r.trace.len(), 300);
    }

    #[test]
    fn unseen_vertices_keep_their_color() {
        let mut tm = cube();
        // an extra triangle far behind every camera is never rasterized
        let base = tm.mesh.vertices.len() as u32;
        tm.mesh.vertices.extend([
            nalgebra::Point3::new(50.0, 50.0, 50.0),
            nalgebra::Point3::new(50.1, 50.0, 50.0),
            nalgebra::Point3::new(50.0, 50.1, 50.0),
        ]);
        tm.mesh.faces.push([base, base + 1, base + 2]);
        tm.colors.extend([[0.123, 0.456, 0.789]; 3]);
        let views = views_of(&cube(), 4);
        let cfg = RefineConfig {
            steps: 20,
            ..Default::default()
        };
        let r = refine_texture(&tm, &views, &cfg).unwrap();
        assert_eq!(&r.mesh.colors[8..], &tm.colors[8..]);
    }

    #[test]
    fn invisible_mesh_is_an_error() {
        let mut tm = cube();
        for v in tm.mesh.vertices.iter_mut() {
            v.coords += Vector3::new(0.0, 40.0, 0.0);
        }
        let views = views_of(&cube(), 3);
        assert!(matches!(refine_texture(&tm, &views, &RefineConfig::default()), Err(Error::NotVisible)));
    }
}
