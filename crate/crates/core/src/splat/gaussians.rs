use nalgebra::{Matrix3, Vector3, Vector4};

use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One Gaussian primitive, used for construction and inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    pub position: Vector3<f64>,
    /// Log of the per-axis standard deviation.
    pub log_scale: Vector3<f64>,
    /// Unit quaternion `(w, x, y, z)`.
    pub rotation: Vector4<f64>,
    pub opacity_logit: f64,
    pub color: Vector3<f64>,
}

impl Gaussian {
    pub fn isotropic(position: Vector3<f64>, sigma: f64, opacity: f64, color: Vector3<f64>) -> Self {
        Self {
            position,
            log_scale: Vector3::repeat(sigma.ln()),
            rotation: Vector4::new(1.0, 0.0, 0.0, 0.0),
            opacity_logit: logit(opacity),
            color,
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }
}

/// Rotation matrix of the normalized quaternion `q / |q|`, `q = (w, x, y, z)`.
pub fn quat_to_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let q = q / q.norm();
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient on the rotation matrix back to the raw quaternion,
/// including the normalization.
pub fn quat_to_matrix_backward(q: &Vector4<f64>, g: &Matrix3<f64>) -> Vector4<f64> {
    let norm = q.norm();
    let u = q / norm;
    let (w, x, y, z) = (u[0], u[1], u[2], u[3]);
    let gu = 2.0
        * Vector4::new(
            -z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)] + x * g[(2, 1)],
            y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)] + z * g[(2, 0)]
                + w * g[(2, 1)]
                - 2.0 * x * g[(2, 2)],
            -2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)] - w * g[(2, 0)]
                + z * g[(2, 1)]
                - 2.0 * y * g[(2, 2)],
            -2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)] - 2.0 * z * g[(1, 1)]
                + y * g[(1, 2)]
                + x * g[(2, 0)]
                + y * g[(2, 1)],
        );
    (gu - u * u.dot(&gu)) / norm
}

/// Structure-of-arrays Gaussian parameters.
///
/// Strides: positions 3, log_scales 3, rotations 4 (`w, x, y, z`),
/// opacity_logits 1, colors 3.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianSet {
    pub positions: Vec<f64>,
    pub log_scales: Vec<f64>,
    pub rotations: Vec<f64>,
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<f64>,
}

impl GaussianSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_gaussians<'a>(items: impl IntoIterator<Item = &'a Gaussian>) -> Self {
        let mut set = Self::new();
        for g in items {
            set.push(g);
        }
        set
    }

    pub fn len(&self) -> usize {
        self.opacity_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacity_logits.is_empty()
    }

    pub fn push(&mut self, g: &Gaussian) {
        self.positions.extend_from_slice(g.position.as_slice());
        self.log_scales.extend_from_slice(g.log_scale.as_slice());
        self.rotations.extend_from_slice(g.rotation.as_slice());
        self.opacity_logits.push(g.opacity_logit);
        self.colors.extend_from_slice(g.color.as_slice());
    }

    pub fn get(&self, i: usize) -> Gaussian {
        Gaussian {
            position: self.position(i),
            log_scale: self.log_scale(i),
            rotation: self.rotation(i),
            opacity_logit: self.opacity_logits[i],
            color: self.color(i),
        }
    }

    #[inline]
    pub fn position(&self, i: usize) -> Vector3<f64> {
        Vector3::from_column_slice(&self.positions[3 * i..3 * i + 3])
    }

    #[inline]
    pub fn log_scale(&self, i: usize) -> Vector3<f64> {
        Vector3::from_column_slice(&self.log_scales[3 * i..3 * i + 3])
    }

    #[inline]
    pub fn rotation(&self, i: usize) -> Vector4<f64> {
        Vector4::from_column_slice(&self.rotations[4 * i..4 * i + 4])
    }

    #[inline]
    pub fn color(&self, i: usize) -> Vector3<f64> {
        Vector3::from_column_slice(&self.colors[3 * i..3 * i + 3])
    }

    #[inline]
    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    /// Checks array lengths and value sanity.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for (what, len, stride) in [
            ("positions", self.positions.len(), 3),
            ("log_scales", self.log_scales.len(), 3),
            ("rotations", self.rotations.len(), 4),
            ("colors", self.colors.len(), 3),
        ] {
            if len != n * stride {
                return Err(Error::ShapeMismatch {
                    what,
                    expected: n * stride,
                    got: len,
                });
            }
        }
        for i in 0..n {
            let q = self.rotation(i);
            if !(q.norm() > 0.0) || !q.iter().all(|v| v.is_finite()) {
                return Err(Error::format("gaussians", format!("invalid rotation at {i}")));
            }
            if !self.log_scale(i).iter().all(|v| v.exp().is_finite() && v.exp() > 0.0) {
                return Err(Error::format("gaussians", format!("invalid scale at {i}")));
            }
        }
        Ok(())
    }

    /// First Gaussian with a non-finite parameter or a scale that overflows
    /// once exponentiated, with the offending group.
    pub fn first_non_finite(&self) -> Option<(&'static str, usize)> {
        let groups: [(&'static str, &[f64], usize); 5] = [
            ("positions", &self.positions, 3),
            ("log_scales", &self.log_scales, 3),
            ("rotations", &self.rotations, 4),
            ("opacity_logits", &self.opacity_logits, 1),
            ("colors", &self.colors, 3),
        ];
        (0..self.len()).find_map(|i| {
            groups.iter().find_map(|&(name, values, stride)| {
                let chunk = &values[i * stride..(i + 1) * stride];
                let bad = if name == "log_scales" {
                    chunk.iter().any(|v| !(v.exp().is_finite() && v.exp() > 0.0))
                } else {
                    chunk.iter().any(|v| !v.is_finite())
                };
                bad.then_some((name, i))
            })
        })
    }

    pub fn normalize_rotations(&mut self) {
        for q in self.rotations.chunks_exact_mut(4) {
            let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
            if n > 0.0 {
                q.iter_mut().for_each(|v| *v /= n);
            } else {
                q.copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
            }
        }
    }

    /// Keeps the Gaussians for which `keep(i)` holds, preserving order.
    pub fn retain_indices(&self, keep: &[bool]) -> GaussianSet {
        let mut out = GaussianSet::new();
        for (i, _) in keep.iter().enumerate().filter(|(_, k)| **k) {
            out.push(&self.get(i));
        }
        out
    }

    /// Reorders by `order[k]` = source index of output `k`.
    pub fn permuted(&self, order: &[usize]) -> GaussianSet {
        let mut out = GaussianSet::new();
        for &i in order {
            out.push(&self.get(i));
        }
        out
    }
}

/// Per-parameter gradients laid out like [`GaussianSet`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianGrads {
    pub positions: Vec<f64>,
    pub log_scales: Vec<f64>,
    pub rotations: Vec<f64>,
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<f64>,
}

impl GaussianGrads {
    pub fn zeros(n: usize) -> Self {
        Self {
            positions: vec![0.0; 3 * n],
            log_scales: vec![0.0; 3 * n],
            rotations: vec![0.0; 4 * n],
            opacity_logits: vec![0.0; n],
            colors: vec![0.0; 3 * n],
        }
    }

    pub fn len(&self) -> usize {
        self.opacity_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacity_logits.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.groups().iter().all(|(_, g)| g.iter().all(|&v| v == 0.0))
    }

    pub fn groups(&self) -> [(&'static str, &[f64]); 5] {
        [
            ("position", &self.positions),
            ("log_scale", &self.log_scales),
            ("rotation", &self.rotations),
            ("opacity_logit", &self.opacity_logits),
            ("color", &self.colors),
        ]
    }
}
