use std::io::{BufRead, Write};

use ply_rs::parser::Parser;
use ply_rs::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType, ScalarType,
};
use ply_rs::writer::Writer;

use super::Geometry;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::mesher::TriangleMesh;

fn scalar(p: &Property) -> Option<f64> {
    Some(match *p {
        Property::Char(v) => v as f64,
        Property::UChar(v) => v as f64,
        Property::Short(v) => v as f64,
        Property::UShort(v) => v as f64,
        Property::Int(v) => v as f64,
        Property::UInt(v) => v as f64,
        Property::Float(v) => v as f64,
        Property::Double(v) => v,
        _ => return None,
    })
}

fn list(p: &Property) -> Option<Vec<i64>> {
    Some(match p {
        Property::ListChar(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListUChar(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListShort(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListUShort(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListInt(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListUInt(v) => v.iter().map(|&x| x as i64).collect(),
        _ => return None,
    })
}

fn get(e: &DefaultElement, key: &str) -> Option<f64> {
    e.get(key).and_then(scalar)
}

/// Vertices (with `nx ny nz` normals if present) and optional faces.
pub fn read_ply<R: BufRead>(r: &mut R) -> Result<Geometry> {
    let ply = Parser::<DefaultElement>::new()
        .read_ply(r)
        .map_err(|e| Error::format("ply", e.to_string()))?;
    let verts = ply
        .payload
        .get("vertex")
        .filter(|v| !v.is_empty())
        .ok_or(Error::EmptyInput("ply vertex element"))?;
    let mut coords = Vec::with_capacity(verts.len() * 3);
    let mut normals = Vec::with_capacity(verts.len() * 3);
    let mut all_normals = true;
    for v in verts {
        for key in ["x", "y", "z"] {
            coords.push(get(v, key).ok_or_else(|| Error::format("ply", format!("vertex lacks `{key}`")))?);
        }
        match (get(v, "nx"), get(v, "ny"), get(v, "nz")) {
            (Some(a), Some(b), Some(c)) => normals.extend([a, b, c]),
            _ => all_normals = false,
        }
    }
    let faces = ply.payload.get("face").map(Vec::as_slice).unwrap_or(&[]);
    if faces.is_empty() {
        let cloud = PointCloud::new(3, coords)?;
        return Ok(Geometry::Cloud(if all_normals { cloud.with_normals(normals)? } else { cloud }));
    }
    let n = verts.len();
    let mut tris = Vec::with_capacity(faces.len());
    for f in faces {
        let idx = f
            .get("vertex_indices")
            .or_else(|| f.get("vertex_index"))
            .and_then(list)
            .ok_or_else(|| Error::format("ply", "face lacks a vertex index list"))?;
        if idx.len() < 3 || idx.iter().any(|&i| i < 0 || i as usize >= n) {
            return Err(Error::format("ply", "bad face"));
        }
        for k in 1..idx.len() - 1 {
            tris.push([idx[0] as usize, idx[k] as usize, idx[k + 1] as usize]);
        }
    }
    let vertices = coords.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(Geometry::Mesh(TriangleMesh::new(vertices, tris)?))
}

fn vertex_def(with_normals: bool) -> ElementDef {
    let mut e = ElementDef::new("vertex".to_string());
    let keys: &[&str] = if with_normals {
        &["x", "y", "z", "nx", "ny", "nz"]
    } else {
        &["x", "y", "z"]
    };
    for k in keys {
        e.properties
            .add(PropertyDef::new(k.to_string(), PropertyType::Scalar(ScalarType::Double)));
    }
    e
}

fn vertex(p: &[f64], n: Option<&[f64]>) -> DefaultElement {
    let mut e = DefaultElement::new();
    for (k, v) in ["x", "y", "z"].iter().zip(p) {
        e.insert(k.to_string(), Property::Double(*v));
    }
    if let Some(n) = n {
        for (k, v) in ["nx", "ny", "nz"].iter().zip(n) {
            e.insert(k.to_string(), Property::Double(*v));
        }
    }
    e
}

fn write<W: Write>(mut ply: Ply<DefaultElement>, w: &mut W) -> Result<()> {
    ply.header.encoding = Encoding::Ascii;
    Writer::new()
        .write_ply(w, &mut ply)
        .map_err(|e| Error::format("ply", e.to_string()))?;
    Ok(())
}

/// ASCII PLY of a 3D cloud, with normals if it has them.
pub fn write_ply_cloud<W: Write>(cloud: &PointCloud, w: &mut W) -> Result<()> {
    if cloud.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: cloud.dim(),
        });
    }
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.elements.add(vertex_def(cloud.has_normals()));
    let verts = (0..cloud.len()).map(|i| vertex(cloud.point(i), cloud.normal(i))).collect();
    ply.payload.insert("vertex".to_string(), verts);
    write(ply, w)
}

pub fn write_ply_mesh<W: Write>(mesh: &TriangleMesh, w: &mut W) -> Result<()> {
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.elements.add(vertex_def(false));
    let mut face = ElementDef::new("face".to_string());
    face.properties.add(PropertyDef::new(
        "vertex_indices".to_string(),
        PropertyType::List(ScalarType::UChar, ScalarType::UInt),
    ));
    ply.header.elements.add(face);
    let verts = mesh.vertices().iter().map(|v| vertex(v, None)).collect();
    let faces = mesh
        .faces()
        .iter()
        .map(|f| {
            let mut e = DefaultElement::new();
            e.insert(
                "vertex_indices".to_string(),
                Property::ListUInt(f.iter().map(|&i| i as u32).collect()),
            );
            e
        })
        .collect();
    ply.payload.insert("vertex".to_string(), verts);
    ply.payload.insert("face".to_string(), faces);
    write(ply, w)
}
