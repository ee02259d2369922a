use std::collections::HashMap;

use super::tables::TRI_TABLE;
use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::BoundingBox;

// Corner offsets, v0..v7.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

struct Grid {
    res: usize,
    lower: [f64; 3],
    step: [f64; 3],
}

impl Grid {
    fn new(domain: &BoundingBox, res: usize) -> Self {
        let lower = [0, 1, 2].map(|a| domain.lower()[a]);
        let step = [0, 1, 2].map(|a| domain.extent(a) / (res - 1) as f64);
        Self { res, lower, step }
    }

    fn point(&self, c: [usize; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| self.lower[a] + c[a] as f64 * self.step[a])
    }

    fn index(&self, c: [usize; 3]) -> usize {
        (c[2] * self.res + c[1]) * self.res + c[0]
    }

    fn slice_values(&self, field: &dyn ScalarField, k: usize) -> Vec<f64> {
        let mut xs = Vec::with_capacity(3 * self.res * self.res);
        for j in 0..self.res {
            for i in 0..self.res {
                xs.extend(self.point([i, j, k]));
            }
        }
        field.values(&xs)
    }
}

/// Extract the zero level set of `field` on an `R³` corner grid over
/// `domain`. Shared edge vertices are merged, faces are oriented along
/// `∇ₓf`. Returns an empty mesh when the field does not change sign.
pub fn marching_cubes(
    field: &dyn ScalarField,
    domain: &BoundingBox,
    resolution: usize,
) -> Result<TriangleMesh> {
    let (mut mesh, _) = extract(field, domain, resolution)?;
    if !mesh.is_empty() {
        mesh.orient_by_gradient(field);
    }
    Ok(mesh)
}

/// Mesh plus, for each vertex, the grid-corner indices of its edge.
pub(super) fn extract(
    field: &dyn ScalarField,
    domain: &BoundingBox,
    resolution: usize,
) -> Result<(TriangleMesh, Vec<[usize; 2]>)> {
    if field.dim() != 3 || domain.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: if field.dim() != 3 { field.dim() } else { domain.dim() },
        });
    }
    if resolution < 2 {
        return Err(Error::config(format!(
            "marching cubes needs resolution >= 2, got {resolution}"
        )));
    }
    let grid = Grid::new(domain, resolution);
    let r = resolution;

    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut origins: Vec<[usize; 2]> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut edge_vertex: HashMap<(usize, usize), usize> = HashMap::new();

    let mut below = grid.slice_values(field, 0);
    for k in 0..r - 1 {
        let above = grid.slice_values(field, k + 1);
        // vertices on edges of the previous slab's top face are still needed,
        // anything older is not
        edge_vertex.retain(|&(lo, _), _| lo / (r * r) >= k);
        for j in 0..r - 1 {
            for i in 0..r - 1 {
                let corner_values = CORNERS.map(|o| {
                    let slice = if o[2] == 0 { &below } else { &above };
                    slice[(j + o[1]) * r + i + o[0]]
                });
                let mut case = 0usize;
                for (bit, v) in corner_values.iter().enumerate() {
                    if *v < 0.0 {
                        case |= 1 << bit;
                    }
                }
                let row = &TRI_TABLE[case];
                if row[0] < 0 {
                    continue;
                }
                let mut edge_ids = [usize::MAX; 12];
                for tri in row.chunks_exact(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let mut ids = [0usize; 3];
                    for (slot, &e) in tri.iter().enumerate() {
                        let e = e as usize;
                        if edge_ids[e] == usize::MAX {
                            let [ca, cb] = EDGES[e];
                            let ga = [i + CORNERS[ca][0], j + CORNERS[ca][1], k + CORNERS[ca][2]];
                            let gb = [i + CORNERS[cb][0], j + CORNERS[cb][1], k + CORNERS[cb][2]];
                            let (ia, ib) = (grid.index(ga), grid.index(gb));
                            let key = (ia.min(ib), ia.max(ib));
                            edge_ids[e] = *edge_vertex.entry(key).or_insert_with(|| {
                                let (va, vb) = (corner_values[ca], corner_values[cb]);
                                let t = va / (va - vb);
                                let (pa, pb) = (grid.point(ga), grid.point(gb));
                                vertices.push([0, 1, 2].map(|a| pa[a] + t * (pb[a] - pa[a])));
                                origins.push([ia, ib]);
                                vertices.len() - 1
                            });
                        }
                        ids[slot] = edge_ids[e];
                    }
                    // collapsed triangles appear when the level set hits a corner
                    if ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2] {
                        faces.push(ids);
                    }
                }
            }
        }
        below = above;
    }
    log::debug!(
        "marching cubes at {r}^3: {} vertices, {} faces",
        vertices.len(),
        faces.len()
    );
    Ok((TriangleMesh::new(vertices, faces)?, origins))
}
