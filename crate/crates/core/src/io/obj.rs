//! Wavefront OBJ with per-vertex colors appended to `v` lines.

use std::io::{BufRead, Write};

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::image::Rgb;
use crate::mesh::{TexturedMesh, TriMesh};

pub fn write_obj<W: Write>(mut w: W, tm: &TexturedMesh) -> Result<()> {
    tm.validate()?;
    for (v, c) in tm.mesh.vertices.iter().zip(&tm.colors) {
        writeln!(w, "v {} {} {} {} {} {}", v.x, v.y, v.z, c[0], c[1], c[2])?;
    }
    for f in &tm.mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

/// Reads positions, optional vertex colors and faces. Polygons are fanned
/// into triangles; texture and normal indices are ignored. Colors are `None`
/// unless every vertex carries one.
pub fn read_obj<R: BufRead>(r: R) -> Result<(TriMesh, Option<Vec<Rgb>>)> {
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let bad = |msg: String| Error::format("OBJ", format!("line {}: {msg}", n + 1));
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let vals: Vec<f64> = tokens
                    .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number {t:?}"))))
                    .collect::<Result<_>>()?;
                match vals.len() {
                    3 | 4 => {}
                    6 | 7 => colors.push([vals[3], vals[4], vals[5]]),
                    k => return Err(bad(format!("vertex with {k} values"))),
                }
                vertices.push(Point3::new(vals[0], vals[1], vals[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = tokens
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|_| bad(format!("bad index {t:?}")))?;
                        let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                        if resolved < 0 {
                            return Err(bad(format!("index {i} out of range")));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(bad("face with fewer than 3 vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let mesh = TriMesh::new(vertices, faces)?;
    let colors = (colors.len() == mesh.vertices.len() && !colors.is_empty()).then_some(colors);
    Ok((mesh, colors))
}

pub fn read_textured_obj<R: BufRead>(r: R) -> Result<TexturedMesh> {
    let (mesh, colors) = read_obj(r)?;
    let colors = colors.ok_or_else(|| Error::format("OBJ", "vertex colors missing"))?;
    TexturedMesh::new(mesh, colors)
}
