//! Readers and writers for point clouds, meshes, contours and plots.

mod obj;
mod ply;
pub mod svg;
mod xyz;

pub use obj::{read_obj, write_obj};
pub use ply::{read_ply, write_ply_cloud, write_ply_mesh};
pub use xyz::{read_xyz, write_xyz};

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::mesher::{Contour2D, TriangleMesh};

/// A file's contents: either bare points or a triangle mesh.
#[derive(Clone, Debug)]
pub enum Geometry {
    Cloud(PointCloud),
    Mesh(TriangleMesh),
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::file(path, e))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::file(path, e))
}

/// Read `.xyz`, `.ply` or `.obj`; PLY and OBJ files with faces come back as
/// meshes.
pub fn read_geometry(path: &Path) -> Result<Geometry> {
    let ext = extension(path);
    let mut r = open(path)?;
    match ext.as_str() {
        "xyz" | "txt" => Ok(Geometry::Cloud(read_xyz(r)?)),
        "ply" => read_ply(&mut r),
        "obj" => read_obj(r),
        _ => Err(Error::format("input", format!("{}: unknown extension `{ext}`", path.display()))),
    }
}

/// Read points only; a mesh contributes its vertices.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    match read_geometry(path)? {
        Geometry::Cloud(c) => Ok(c),
        Geometry::Mesh(m) => Ok(PointCloud::from_points(m.vertices())),
    }
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = create(path)?;
    match extension(path).as_str() {
        "ply" => write_ply_cloud(cloud, &mut w)?,
        _ => write_xyz(cloud, &mut w)?,
    }
    w.flush().map_err(|e| Error::file(path, e))
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut w = create(path)?;
    match extension(path).as_str() {
        "ply" => write_ply_mesh(mesh, &mut w)?,
        _ => write_obj(mesh, &mut w)?,
    }
    w.flush().map_err(|e| Error::file(path, e))
}

/// One row per segment: `x0,y0,x1,y1`.
pub fn write_contour_csv<W: Write>(contour: &Contour2D, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x0", "y0", "x1", "y1"])?;
    for (a, b) in contour.segment_points() {
        w.write_record([a[0], a[1], b[0], b[1]].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
