//! Binary little-endian PLY for point sets, Gaussian sets and colored meshes.

use std::io::{BufRead, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Point3, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::grid::PointSet;
use crate::mesh::TexturedMesh;
use crate::splat::{Gaussian, GaussianSet};

const GAUSSIAN_PROPS: [&str; 14] = [
    "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity", "red", "green",
    "blue",
];

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::format("PLY", format!("unknown scalar type {other:?}"))),
        })
    }

    fn read<R: Read>(self, r: &mut R) -> std::io::Result<f64> {
        Ok(match self {
            Scalar::I8 => r.read_i8()? as f64,
            Scalar::U8 => r.read_u8()? as f64,
            Scalar::I16 => r.read_i16::<LittleEndian>()? as f64,
            Scalar::U16 => r.read_u16::<LittleEndian>()? as f64,
            Scalar::I32 => r.read_i32::<LittleEndian>()? as f64,
            Scalar::U32 => r.read_u32::<LittleEndian>()? as f64,
            Scalar::F32 => r.read_f32::<LittleEndian>()? as f64,
            Scalar::F64 => r.read_f64::<LittleEndian>()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Clone, Debug, PartialEq)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Vec<Element>> {
    let mut line = String::new();
    let next = |r: &mut R, line: &mut String| -> Result<()> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(Error::format("PLY", "header ended early"));
        }
        Ok(())
    };
    next(r, &mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::format("PLY", "missing magic line"));
    }
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next(r, &mut line)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", _] => {}
            ["format", other, ..] => {
                return Err(Error::format("PLY", format!("unsupported format {other}")));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::format("PLY", format!("bad element count {count:?}")))?,
                properties: Vec::new(),
            }),
            ["property", "list", count_ty, item_ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::format("PLY", "property before element"))?
                .properties
                .push(Property::List(name.to_string(), Scalar::parse(count_ty)?, Scalar::parse(item_ty)?)),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::format("PLY", "property before element"))?
                .properties
                .push(Property::Scalar(name.to_string(), Scalar::parse(ty)?)),
            _ => return Err(Error::format("PLY", format!("unexpected header line {:?}", line.trim_end()))),
        }
    }
    Ok(elements)
}

/// Reads every element as rows of scalars (lists are flattened after their
/// length). Only the first `vertex` and `face` elements are kept.
struct PlyData {
    vertex_names: Vec<String>,
    vertices: Vec<Vec<f64>>,
    faces: Vec<Vec<u32>>,
}

fn read_ply<R: BufRead>(r: &mut R) -> Result<PlyData> {
    let elements = read_header(r)?;
    let mut data = PlyData {
        vertex_names: Vec::new(),
        vertices: Vec::new(),
        faces: Vec::new(),
    };
    let truncated = |e: std::io::Error| Error::format("PLY", format!("body truncated: {e}"));
    for el in &elements {
        let is_vertex = el.name == "vertex";
        if is_vertex {
            for p in &el.properties {
                match p {
                    Property::Scalar(n, _) => data.vertex_names.push(n.clone()),
                    Property::List(..) => return Err(Error::format("PLY", "list property on vertices")),
                }
            }
        }
        for _ in 0..el.count {
            let mut row = Vec::with_capacity(el.properties.len());
            let mut face = Vec::new();
            for p in &el.properties {
                match p {
                    Property::Scalar(_, ty) => row.push(ty.read(r).map_err(truncated)?),
                    Property::List(name, count_ty, item_ty) => {
                        let n = count_ty.read(r).map_err(truncated)? as usize;
                        for _ in 0..n {
                            let v = item_ty.read(r).map_err(truncated)?;
                            if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                                if v < 0.0 || v.fract() != 0.0 {
                                    return Err(Error::format("PLY", format!("bad vertex index {v}")));
                                }
                                face.push(v as u32);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                data.vertices.push(row);
            } else if el.name == "face" {
                data.faces.push(face);
            }
        }
    }
    Ok(data)
}

fn column(data: &PlyData, name: &str) -> Result<usize> {
    data.vertex_names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::format("PLY", format!("missing vertex property {name:?}")))
}

fn write_header<W: Write>(w: &mut W, count: usize, props: &[(&str, &str)], faces: Option<usize>) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {count}")?;
    for (ty, name) in props {
        writeln!(w, "property {ty} {name}")?;
    }
    if let Some(n) = faces {
        writeln!(w, "element face {n}")?;
        writeln!(w, "property list uchar int vertex_indices")?;
    }
    writeln!(w, "end_header")?;
    Ok(())
}

pub fn write_points_ply<W: Write>(mut w: W, points: &PointSet) -> Result<()> {
    points.validate()?;
    let mut props = vec![("float", "x"), ("float", "y"), ("float", "z")];
    if points.normals.is_some() {
        props.extend([("float", "nx"), ("float", "ny"), ("float", "nz")]);
    }
    write_header(&mut w, points.len(), &props, None)?;
    for (i, p) in points.points.iter().enumerate() {
        for c in p.iter() {
            w.write_f32::<LittleEndian>(*c as f32)?;
        }
        if let Some(n) = &points.normals {
            for c in n[i].iter() {
                w.write_f32::<LittleEndian>(*c as f32)?;
            }
        }
    }
    Ok(())
}

pub fn read_points_ply<R: BufRead>(mut r: R) -> Result<PointSet> {
    let data = read_ply(&mut r)?;
    let xyz = [column(&data, "x")?, column(&data, "y")?, column(&data, "z")?];
    let points = data.vertices.iter().map(|row| Point3::new(row[xyz[0]], row[xyz[1]], row[xyz[2]])).collect();
    let normals = match (column(&data, "nx"), column(&data, "ny"), column(&data, "nz")) {
        (Ok(a), Ok(b), Ok(c)) => Some(data.vertices.iter().map(|row| Vector3::new(row[a], row[b], row[c])).collect()),
        _ => None,
    };
    let set = PointSet { points, normals };
    set.validate()?;
    Ok(set)
}

/// Log-scales, quaternion `(w, x, y, z)`, opacity logit and RGB, all float32.
pub fn write_gaussians_ply<W: Write>(mut w: W, gs: &GaussianSet) -> Result<()> {
    gs.validate()?;
    let props: Vec<(&str, &str)> = GAUSSIAN_PROPS.iter().map(|n| ("float", *n)).collect();
    write_header(&mut w, gs.len(), &props, None)?;
    for i in 0..gs.len() {
        let g = gs.get(i);
        let values = g
            .position
            .iter()
            .chain(g.log_scale.iter())
            .chain(g.rotation.iter())
            .chain(std::iter::once(&g.opacity_logit))
            .chain(g.color.iter());
        for v in values {
            w.write_f32::<LittleEndian>(*v as f32)?;
        }
    }
    Ok(())
}

pub fn read_gaussians_ply<R: BufRead>(mut r: R) -> Result<GaussianSet> {
    let data = read_ply(&mut r)?;
    let cols = GAUSSIAN_PROPS.map(|n| column(&data, n));
    let mut idx = [0usize; 14];
    for (slot, c) in idx.iter_mut().zip(cols) {
        *slot = c?;
    }
    let mut gs = GaussianSet::new();
    for row in &data.vertices {
        let v = |k: usize| row[idx[k]];
        gs.push(&Gaussian {
            position: Vector3::new(v(0), v(1), v(2)),
            log_scale: Vector3::new(v(3), v(4), v(5)),
            rotation: Vector4::new(v(6), v(7), v(8), v(9)),
            opacity_logit: v(10),
            color: Vector3::new(v(11), v(12), v(13)),
        });
    }
    gs.validate()?;
    Ok(gs)
}

/// Vertices as float32 with uchar colors, faces as index lists.
pub fn write_mesh_ply<W: Write>(mut w: W, tm: &TexturedMesh) -> Result<()> {
    tm.validate()?;
    let props = [
        ("float", "x"),
        ("float", "y"),
        ("float", "z"),
        ("uchar", "red"),
        ("uchar", "green"),
        ("uchar", "blue"),
    ];
    write_header(&mut w, tm.mesh.vertices.len(), &props, Some(tm.mesh.faces.len()))?;
    for (v, c) in tm.mesh.vertices.iter().zip(&tm.colors) {
        for x in v.iter() {
            w.write_f32::<LittleEndian>(*x as f32)?;
        }
        for x in c {
            w.write_u8((x * 255.0).round() as u8)?;
        }
    }
    for f in &tm.mesh.faces {
        w.write_u8(3)?;
        for &i in f {
            w.write_i32::<LittleEndian>(i as i32)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn points_round_trip_through_f32() {
        let set = PointSet::with_normals(
            vec![Point3::new(0.1, -0.2, 0.3), Point3::new(0.25, 0.5, -0.125)],
            vec![Vector3::x(), Vector3::new(0.0, 0.6, 0.8)],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_points_ply(&mut buf, &set).unwrap();
        let back = read_points_ply(Cursor::new(&buf)).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in set.points.iter().zip(&back.points) {
            assert_eq!(a.map(|v| v as f32 as f64), *b);
        }
        assert!(back.normals.is_some());
        let plain = PointSet::new(set.points.clone());
        let mut buf = Vec::new();
        write_points_ply(&mut buf, &plain).unwrap();
        assert!(read_points_ply(Cursor::new(&buf)).unwrap().normals.is_none());
    }

    #[test]
    fn gaussians_round_trip() {
        let gs = GaussianSet::from_gaussians(&[
            Gaussian::isotropic(Vector3::new(0.1, 0.2, 0.3), 0.05, 0.3, Vector3::new(0.25, 0.5, 0.75)),
            Gaussian::isotropic(Vector3::new(-0.1, 0.0, 0.4), 0.02, 0.9, Vector3::new(1.0, 0.0, 0.5)),
        ]);
        let mut buf = Vec::new();
        write_gaussians_ply(&mut buf, &gs).unwrap();
        let header = String::from_utf8_lossy(&buf[..300]);
        assert!(header.contains("property float scale_2\nproperty float rot_0"));
        let back = read_gaussians_ply(Cursor::new(&buf)).unwrap();
        for i in 0..2 {
            let (a, b) = (gs.get(i), back.get(i));
            assert!((a.position - b.position).amax() < 1e-7);
            assert!((a.log_scale - b.log_scale).amax() < 1e-6);
            assert!((a.opacity() - b.opacity()).abs() < 1e-6);
        }
    }

    #[test]
    fn malformed_headers() {
        for bad in [
            &b"plx\n"[..],
            b"ply\nformat ascii 1.0\nend_header\n",
            b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n\0\0\0\0",
        ] {
            assert!(matches!(read_points_ply(Cursor::new(bad)), Err(Error::Format { .. })));
        }
    }

    #[test]
    fn mesh_ply_header_counts() {
        let tm = TexturedMesh::uniform(crate::mesh::trimesh::unit_cube(), [0.5; 3]);
        let mut buf = Vec::new();
        write_mesh_ply(&mut buf, &tm).unwrap();
        let text = String::from_utf8_lossy(&buf);
        assert!(text.contains("element vertex 8\n"));
        assert!(text.contains("element face 12\n"));
        let header_len = text.find("end_header\n").unwrap() + "end_header\n".len();
        assert_eq!(buf.len() - header_len, 8 * 15 + 12 * 13);
    }
}
