use std::io::{BufRead, Write};

use super::Geometry;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::mesher::TriangleMesh;

fn index(token: &str, n: usize, lineno: usize) -> Result<usize> {
    let head = token.split('/').next().unwrap_or("");
    let i: i64 = head
        .parse()
        .map_err(|_| Error::format("obj", format!("line {lineno}: bad index `{token}`")))?;
    // 1-based; negative counts back from the latest vertex
    let resolved = if i < 0 { n as i64 + i } else { i - 1 };
    if resolved < 0 || resolved >= n as i64 {
        return Err(Error::format("obj", format!("line {lineno}: index {i} out of range")));
    }
    Ok(resolved as usize)
}

/// Vertices and faces; polygons are fan-triangulated. A file without faces
/// is returned as a cloud.
pub fn read_obj<R: BufRead>(r: R) -> Result<Geometry> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let v: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::format("obj", format!("line {}: bad vertex", i + 1)))?;
                if v.len() != 3 {
                    return Err(Error::format("obj", format!("line {}: vertex needs 3 coordinates", i + 1)));
                }
                vertices.push([v[0], v[1], v[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = tok
                    .map(|t| index(t, vertices.len(), i + 1))
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::format("obj", format!("line {}: face needs 3 vertices", i + 1)));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if vertices.is_empty() {
        return Err(Error::EmptyInput("obj file"));
    }
    if faces.is_empty() {
        return Ok(Geometry::Cloud(PointCloud::from_points(&vertices)));
    }
    Ok(Geometry::Mesh(TriangleMesh::new(vertices, faces)?))
}

pub fn write_obj<W: Write>(mesh: &TriangleMesh, w: &mut W) -> Result<()> {
    for v in mesh.vertices() {
        writeln!(w, "v {:?} {:?} {:?}", v[0], v[1], v[2])?;
    }
    for f in mesh.faces() {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}
