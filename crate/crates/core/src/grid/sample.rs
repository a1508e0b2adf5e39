use nalgebra::{Point3, Vector3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSet {
    pub points: Vec<Point3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
}

impl PointSet {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        Self { points, normals: None }
    }

    pub fn with_normals(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if normals.len() != points.len() {
            return Err(Error::ShapeMismatch {
                what: "normals",
                expected: points.len(),
                got: normals.len(),
            });
        }
        let set = Self {
            points,
            normals: Some(normals),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::format("point set", format!("point {i} is not finite")));
        }
        if let Some(n) = &self.normals {
            if n.len() != self.points.len() {
                return Err(Error::ShapeMismatch {
                    what: "normals",
                    expected: self.points.len(),
                    got: n.len(),
                });
            }
        }
        Ok(())
    }
}

/// `n` points distributed uniformly by area over the mesh, each carrying
/// its face normal.
pub fn sample_surface<R: Rng + ?Sized>(mesh: &TriMesh, n: usize, rng: &mut R) -> Result<PointSet> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::ZeroAreaMesh);
    }
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let mut f = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        // never land on a zero-area face
        while mesh.face_area(f) == 0.0 && f + 1 < cumulative.len() {
            f += 1;
        }
        let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let [a, b, c] = mesh.triangle(f);
        points.push(a + (b - a) * u + (c - a) * v);
        normals.push(mesh.face_cross(f).normalize());
    }
    Ok(PointSet {
        points,
        normals: Some(normals),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::trimesh::unit_cube;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_surface(&unit_cube(), 0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn points_on_triangle_plane() {
        let mesh = TriMesh::new(
            vec![Point3::new(0.1, 0.2, 0.3), Point3::new(1.0, -0.5, 0.2), Point3::new(0.3, 0.9, -0.7)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let n = mesh.face_cross(0).normalize();
        let d = n.dot(&mesh.vertices[0].coords);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ps = sample_surface(&mesh, 1000, &mut rng).unwrap();
        assert!(ps.points.iter().all(|p| (n.dot(&p.coords) - d).abs() < 1e-6));
    }

    #[test]
    fn cube_faces_equally_hit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 60000;
        let ps = sample_surface(&unit_cube(), n, &mut rng).unwrap();
        let mut counts = [0usize; 6];
        for nrm in ps.normals.as_ref().unwrap() {
            let axis = nrm.iamax();
            counts[2 * axis + (nrm[axis] > 0.0) as usize] += 1;
        }
        let p = 1.0 / 6.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn zero_area_is_error() {
        let mesh = TriMesh::new(vec![Point3::origin(); 3], vec![[0, 1, 2]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(sample_surface(&mesh, 5, &mut rng), Err(Error::ZeroAreaMesh)));
        assert!(matches!(sample_surface(&TriMesh::default(), 5, &mut rng), Err(Error::ZeroAreaMesh)));
    }
}
