use std::collections::HashMap;

use super::Contour2D;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::BoundingBox;

// Corners c0..c3 counter-clockwise from the lower left; edge e joins
// corner e and corner (e + 1) % 4.
const CORNERS: [[usize; 2]; 4] = [[0, 0], [1, 0], [1, 1], [0, 1]];

// The two edges adjacent to each corner.
const AROUND: [[usize; 2]; 4] = [[3, 0], [0, 1], [1, 2], [2, 3]];

/// Extract the zero contour of a 2D field on an `R²` corner grid. Saddle
/// cells are resolved by the sign at the cell center.
pub fn marching_squares(
    field: &dyn ScalarField,
    domain: &BoundingBox,
    resolution: usize,
) -> Result<Contour2D> {
    if field.dim() != 2 || domain.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: if field.dim() != 2 { field.dim() } else { domain.dim() },
        });
    }
    if resolution < 2 {
        return Err(Error::config(format!(
            "marching squares needs resolution >= 2, got {resolution}"
        )));
    }
    let r = resolution;
    let step = [0, 1].map(|a| domain.extent(a) / (r - 1) as f64);
    let point = |c: [usize; 2]| [0, 1].map(|a| domain.lower()[a] + c[a] as f64 * step[a]);
    let xs: Vec<f64> = (0..r * r).flat_map(|k| point([k % r, k / r])).collect();
    let values = field.values(&xs);

    // isolated corners per cell, saddles still pending the center sign
    let mut isolated: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    let mut saddles: Vec<(usize, usize, usize)> = Vec::new();
    for j in 0..r - 1 {
        for i in 0..r - 1 {
            let v = CORNERS.map(|o| values[(j + o[1]) * r + i + o[0]]);
            let neg = v.map(|x| x < 0.0);
            let count = neg.iter().filter(|&&b| b).count();
            match count {
                0 | 4 => {}
                1 | 3 => {
                    let odd = (0..4).find(|&c| neg[c] == (count == 1)).unwrap();
                    isolated.push((i, j, vec![odd]));
                }
                _ => {
                    if neg[0] == neg[2] {
                        saddles.push((i, j, usize::from(neg[0])));
                    } else if neg[0] == neg[1] {
                        // horizontal split: edges 3 and 1
                        isolated.push((i, j, vec![4]));
                    } else {
                        // vertical split: edges 0 and 2
                        isolated.push((i, j, vec![5]));
                    }
                }
            }
        }
    }
    if !saddles.is_empty() {
        let centers: Vec<f64> = saddles
            .iter()
            .flat_map(|&(i, j, _)| {
                let p = point([i, j]);
                [p[0] + 0.5 * step[0], p[1] + 0.5 * step[1]]
            })
            .collect();
        let center_values = field.values(&centers);
        for (&(i, j, c02_negative), fc) in saddles.iter().zip(center_values) {
            let center_negative = fc < 0.0;
            // isolate the diagonal pair whose sign differs from the center
            let pair = if (c02_negative == 1) == center_negative {
                vec![1, 3]
            } else {
                vec![0, 2]
            };
            isolated.push((i, j, pair));
        }
        isolated.sort_unstable_by_key(|&(i, j, _)| (j, i));
    }

    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut segments: Vec<[usize; 2]> = Vec::new();
    let mut edge_vertex: HashMap<(usize, usize), usize> = HashMap::new();
    for (i, j, parts) in isolated {
        let mut vertex_on = |e: usize| -> usize {
            let (ca, cb) = (CORNERS[e], CORNERS[(e + 1) % 4]);
            let ga = [i + ca[0], j + ca[1]];
            let gb = [i + cb[0], j + cb[1]];
            let (ia, ib) = (ga[1] * r + ga[0], gb[1] * r + gb[0]);
            *edge_vertex.entry((ia.min(ib), ia.max(ib))).or_insert_with(|| {
                let (va, vb) = (values[ia], values[ib]);
                let t = va / (va - vb);
                let (pa, pb) = (point(ga), point(gb));
                vertices.push([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]);
                vertices.len() - 1
            })
        };
        for part in parts {
            let [ea, eb] = match part {
                4 => [3, 1],
                5 => [0, 2],
                c => AROUND[c],
            };
            let (a, b) = (vertex_on(ea), vertex_on(eb));
            if a != b {
                segments.push([a, b]);
            }
        }
    }
    Contour2D::new(vertices, segments)
}
