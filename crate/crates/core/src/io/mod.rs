//! On-disk formats: PLY, OBJ and CSV loss traces.

mod obj;
mod ply;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

pub use obj::{read_obj, read_textured_obj, write_obj};
pub use ply::{read_gaussians_ply, read_points_ply, write_gaussians_ply, write_mesh_ply, write_points_ply};

use crate::error::{Error, Result};
use crate::grid::PointSet;
use crate::mesh::TexturedMesh;
use crate::optim::{write_trace_csv, LossRecord};
use crate::splat::GaussianSet;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::from(e).at(path))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::from(e).at(path))?))
}

fn save_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| Ok(w.flush()?)).map_err(|e| e.at(path))
}

pub fn save_points(path: &Path, points: &PointSet) -> Result<()> {
    save_with(path, |w| write_points_ply(w, points))
}

pub fn load_points(path: &Path) -> Result<PointSet> {
    read_points_ply(open(path)?).map_err(|e| e.at(path))
}

pub fn save_gaussians(path: &Path, gs: &GaussianSet) -> Result<()> {
    save_with(path, |w| write_gaussians_ply(w, gs))
}

pub fn load_gaussians(path: &Path) -> Result<GaussianSet> {
    read_gaussians_ply(open(path)?).map_err(|e| e.at(path))
}

pub fn save_obj(path: &Path, tm: &TexturedMesh) -> Result<()> {
    save_with(path, |w| write_obj(w, tm))
}

pub fn load_obj(path: &Path) -> Result<TexturedMesh> {
    read_textured_obj(open(path)?).map_err(|e| e.at(path))
}

pub fn save_trace(path: &Path, trace: &[LossRecord]) -> Result<()> {
    save_with(path, |w| write_trace_csv(w, trace))
}

/// Parses a trace written by [`save_trace`].
pub fn load_trace(path: &Path) -> Result<Vec<LossRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    let mut lines = text.lines();
    if lines.next() != Some("iteration,mse,dssim,perceptual,total") {
        return Err(Error::format("CSV", "unexpected header").at(path));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let bad = || Error::format("CSV", format!("row {}: {line:?}", n + 1)).at(path);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(LossRecord {
                iteration: f[0].parse().map_err(|_| bad())?,
                mse: num(f[1])?,
                dssim: num(f[2])?,
                perceptual: num(f[3])?,
                total: num(f[4])?,
            })
        })
        .collect()
}

pub fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    save_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}
