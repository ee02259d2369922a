use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Whitespace-separated rows of `x y [z]`, optionally followed by a normal
/// of the same width. Blank lines and `#` comments are skipped.
pub fn read_xyz<R: BufRead>(r: R) -> Result<PointCloud> {
    let mut width = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::format("xyz", format!("line {}: not a number", lineno + 1)))?;
        match width {
            None => width = Some(vals.len()),
            Some(w) if w != vals.len() => {
                return Err(Error::format("xyz", format!("line {}: expected {w} columns", lineno + 1)))
            }
            _ => {}
        }
        rows.push(vals);
    }
    let width = width.ok_or(Error::EmptyInput("xyz file"))?;
    let (dim, has_normals) = match width {
        2 | 3 => (width, false),
        4 => (2, true),
        6 => (3, true),
        _ => return Err(Error::format("xyz", format!("{width} columns per row"))),
    };
    let coords = rows.iter().flat_map(|r| r[..dim].iter().copied()).collect();
    let cloud = PointCloud::new(dim, coords)?;
    if has_normals {
        cloud.with_normals(rows.iter().flat_map(|r| r[dim..].iter().copied()).collect())
    } else {
        Ok(cloud)
    }
}

pub fn write_xyz<W: Write>(cloud: &PointCloud, w: &mut W) -> Result<()> {
    for i in 0..cloud.len() {
        let mut row: Vec<String> = cloud.point(i).iter().map(|v| format!("{v:?}")).collect();
        if let Some(n) = cloud.normal(i) {
            row.extend(n.iter().map(|v| format!("{v:?}")));
        }
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}
