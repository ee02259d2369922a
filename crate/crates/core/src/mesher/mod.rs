//! Zero-level-set extraction, uniform surface sampling, and surface
//! integrals over extracted meshes.

mod marching_cubes;
mod marching_squares;
mod tables;

pub use marching_cubes::marching_cubes;
pub use marching_squares::marching_squares;

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::BoundingBox;

/// Indexed triangle mesh with cached face areas.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    face_areas: Vec<f64>,
    total_area: f64,
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(bad) = faces.iter().flatten().find(|&&i| i >= vertices.len()) {
            return Err(Error::format(
                "mesh",
                format!("face index {bad} out of range for {} vertices", vertices.len()),
            ));
        }
        let mut mesh = Self {
            vertices,
            faces,
            face_areas: Vec::new(),
            total_area: 0.0,
        };
        mesh.recompute_areas();
        Ok(mesh)
    }

    fn recompute_areas(&mut self) {
        self.face_areas = (0..self.faces.len())
            .map(|f| {
                let c = self.face_cross(f);
                0.5 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
            })
            .collect();
        self.total_area = self.face_areas.iter().sum();
    }

    fn face_cross(&self, f: usize) -> [f64; 3] {
        let [a, b, c] = self.faces[f].map(|i| self.vertices[i]);
        cross3(sub3(b, a), sub3(c, a))
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    /// |S|, the sum of face areas.
    pub fn area(&self) -> f64 {
        self.total_area
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Unit normal by the right-hand rule on the vertex order; zero for
    /// degenerate faces.
    pub fn face_normal(&self, f: usize) -> [f64; 3] {
        let c = self.face_cross(f);
        let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        if n > 0.0 {
            c.map(|v| v / n)
        } else {
            [0.0; 3]
        }
    }

    pub fn face_centroid(&self, f: usize) -> [f64; 3] {
        let [a, b, c] = self.faces[f].map(|i| self.vertices[i]);
        [0, 1, 2].map(|k| (a[k] + b[k] + c[k]) / 3.0)
    }

    /// Flip faces so their normals agree with `∇ₓf` at the centroid.
    pub fn orient_by_gradient(&mut self, field: &dyn ScalarField) {
        let centroids: Vec<f64> = (0..self.faces.len())
            .flat_map(|f| self.face_centroid(f))
            .collect();
        let (_, grads) = field.values_and_gradients(&centroids);
        for f in 0..self.faces.len() {
            let n = self.face_cross(f);
            let g = &grads[3 * f..3 * f + 3];
            if n[0] * g[0] + n[1] * g[1] + n[2] * g[2] < 0.0 {
                self.faces[f].swap(1, 2);
            }
        }
    }

    /// Apply a point map to every vertex (e.g. de-normalization).
    pub fn map_vertices(&self, map: impl Fn([f64; 3]) -> [f64; 3]) -> TriangleMesh {
        let mut out = Self {
            vertices: self.vertices.iter().map(|&v| map(v)).collect(),
            faces: self.faces.clone(),
            face_areas: Vec::new(),
            total_area: 0.0,
        };
        out.recompute_areas();
        out
    }
}

/// Marching-squares output: indexed polyline segments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Contour2D {
    vertices: Vec<[f64; 2]>,
    segments: Vec<[usize; 2]>,
}

impl Contour2D {
    pub fn new(vertices: Vec<[f64; 2]>, segments: Vec<[usize; 2]>) -> Result<Self> {
        if let Some(bad) = segments.iter().flatten().find(|&&i| i >= vertices.len()) {
            return Err(Error::format(
                "contour",
                format!("segment index {bad} out of range"),
            ));
        }
        Ok(Self { vertices, segments })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn segments(&self) -> &[[usize; 2]] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segment_length(&self, s: usize) -> f64 {
        let [a, b] = self.segments[s].map(|i| self.vertices[i]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    pub fn length(&self) -> f64 {
        (0..self.segments.len()).map(|s| self.segment_length(s)).sum()
    }

    /// Segment endpoint pairs.
    pub fn segment_points(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        self.segments
            .iter()
            .map(|&[a, b]| (self.vertices[a], self.vertices[b]))
    }

    /// Connected components as lists of vertex indices, ordered by their
    /// smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for &[a, b] in &self.segments {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut used = vec![false; self.vertices.len()];
        for &[a, b] in &self.segments {
            used[a] = true;
            used[b] = true;
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for v in 0..self.vertices.len() {
            if used[v] {
                let r = find(&mut parent, v);
                groups.entry(r).or_default().push(v);
            }
        }
        groups.into_values().collect()
    }

    pub fn map_vertices(&self, map: impl Fn([f64; 2]) -> [f64; 2]) -> Contour2D {
        Contour2D {
            vertices: self.vertices.iter().map(|&v| map(v)).collect(),
            segments: self.segments.clone(),
        }
    }
}

/// A zero-level set in either dimension.
#[derive(Clone, Debug, PartialEq)]
pub enum LevelSet {
    Mesh(TriangleMesh),
    Contour(Contour2D),
}

impl LevelSet {
    pub fn dim(&self) -> usize {
        match self {
            LevelSet::Mesh(_) => 3,
            LevelSet::Contour(_) => 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            LevelSet::Mesh(m) => m.is_empty(),
            LevelSet::Contour(c) => c.is_empty(),
        }
    }

    /// Area in 3D, length in 2D.
    pub fn measure(&self) -> f64 {
        match self {
            LevelSet::Mesh(m) => m.area(),
            LevelSet::Contour(c) => c.length(),
        }
    }

    pub fn num_elements(&self) -> usize {
        match self {
            LevelSet::Mesh(m) => m.faces().len(),
            LevelSet::Contour(c) => c.segments().len(),
        }
    }

    /// `n` points uniformly distributed over the level set, row-major.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            LevelSet::Mesh(m) => Ok(sample_mesh_uniform(m, n, rng)?.points),
            LevelSet::Contour(c) => sample_contour_uniform(c, n, rng),
        }
    }
}

/// Marching cubes in 3D, marching squares in 2D. Fails with
/// [`Error::EmptyLevelSet`] when nothing is extracted.
pub fn extract_level_set(
    field: &dyn ScalarField,
    domain: &BoundingBox,
    resolution: usize,
) -> Result<LevelSet> {
    let set = match field.dim() {
        3 => LevelSet::Mesh(marching_cubes(field, domain, resolution)?),
        2 => LevelSet::Contour(marching_squares(field, domain, resolution)?),
        d => {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: d,
            })
        }
    };
    if set.is_empty() {
        return Err(Error::EmptyLevelSet);
    }
    Ok(set)
}

/// Points drawn uniformly from a mesh together with the face each came from.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshSamples {
    /// Row-major `n * 3`.
    pub points: Vec<f64>,
    pub faces: Vec<usize>,
}

fn pick_weighted<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let total = *cumulative.last().expect("non-empty");
    let u = rng.random::<f64>() * total;
    cumulative
        .partition_point(|&c| c <= u)
        .min(cumulative.len() - 1)
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

/// Area-weighted face choice followed by uniform barycentric coordinates.
pub fn sample_mesh_uniform<R: Rng + ?Sized>(
    mesh: &TriangleMesh,
    n: usize,
    rng: &mut R,
) -> Result<MeshSamples> {
    if mesh.is_empty() || !(mesh.area() > 0.0) {
        return Err(Error::EmptyInput("mesh"));
    }
    let cum = cumulative(mesh.face_areas());
    let mut points = Vec::with_capacity(3 * n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let f = pick_weighted(&cum, rng);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        let [a, b, c] = mesh.faces()[f].map(|i| mesh.vertices()[i]);
        for k in 0..3 {
            points.push(wa * a[k] + wb * b[k] + wc * c[k]);
        }
        faces.push(f);
    }
    Ok(MeshSamples { points, faces })
}

/// Length-weighted segment choice followed by a uniform position on it.
pub fn sample_contour_uniform<R: Rng + ?Sized>(
    contour: &Contour2D,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let lengths: Vec<f64> = (0..contour.segments().len())
        .map(|s| contour.segment_length(s))
        .collect();
    if lengths.iter().sum::<f64>() <= 0.0 {
        return Err(Error::EmptyInput("contour"));
    }
    let cum = cumulative(&lengths);
    let mut points = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let s = pick_weighted(&cum, rng);
        let t: f64 = rng.random();
        let (a, b) = (
            contour.vertices()[contour.segments()[s][0]],
            contour.vertices()[contour.segments()[s][1]],
        );
        points.push(a[0] + t * (b[0] - a[0]));
        points.push(a[1] + t * (b[1] - a[1]));
    }
    Ok(points)
}

/// Centroid-rule quadrature of `∫_S 1/‖∇ₓf‖ dS` over a mesh.
pub fn surface_integral_inv_gradnorm(mesh: &TriangleMesh, field: &dyn ScalarField) -> Result<f64> {
    if mesh.is_empty() {
        return Err(Error::EmptyInput("mesh"));
    }
    let centroids: Vec<f64> = (0..mesh.faces().len())
        .flat_map(|f| mesh.face_centroid(f))
        .collect();
    let (_, grads) = field.values_and_gradients(&centroids);
    let mut total = 0.0;
    for (area, g) in mesh.face_areas().iter().zip(grads.chunks_exact(3)) {
        let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if gn < 1e-8 {
            return Err(Error::VanishingGradient("mesh face centroid"));
        }
        total += area / gn;
    }
    Ok(total)
}

/// Midpoint-rule `∫_C 1/‖∇ₓf‖ dl` over a contour.
pub fn contour_integral_inv_gradnorm(contour: &Contour2D, field: &dyn ScalarField) -> Result<f64> {
    if contour.is_empty() {
        return Err(Error::EmptyInput("contour"));
    }
    let mids: Vec<f64> = contour
        .segment_points()
        .flat_map(|(a, b)| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])])
        .collect();
    let (_, grads) = field.values_and_gradients(&mids);
    let mut total = 0.0;
    for (s, g) in grads.chunks_exact(2).enumerate() {
        let gn = g[0].hypot(g[1]);
        if gn < 1e-8 {
            return Err(Error::VanishingGradient("contour segment midpoint"));
        }
        total += contour.segment_length(s) / gn;
    }
    Ok(total)
}

/// `∫ 1/‖∇ₓf‖` over either kind of level set.
pub fn level_set_integral_inv_gradnorm(set: &LevelSet, field: &dyn ScalarField) -> Result<f64> {
    match set {
        LevelSet::Mesh(m) => surface_integral_inv_gradnorm(m, field),
        LevelSet::Contour(c) => contour_integral_inv_gradnorm(c, field),
    }
}
