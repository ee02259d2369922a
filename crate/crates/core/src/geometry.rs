//! Point sets, axis-aligned boxes and small vector helpers.

use rand::Rng;

use crate::error::{Error, Result};

/// `n` points in 2D or 3D, stored row-major, with optional unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    normals: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: coords.len(),
            });
        }
        Ok(Self {
            dim,
            coords,
            normals: None,
        })
    }

    pub fn with_normals(mut self, normals: Vec<f64>) -> Result<Self> {
        if normals.len() != self.coords.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coords.len(),
                got: normals.len(),
            });
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn from_points<const D: usize>(points: &[[f64; D]]) -> Self {
        Self {
            dim: D,
            coords: points.iter().flatten().copied().collect(),
            normals: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn normal(&self, i: usize) -> Option<&[f64]> {
        self.normals
            .as_ref()
            .map(|n| &n[i * self.dim..(i + 1) * self.dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn normals(&self) -> Option<&[f64]> {
        self.normals.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Points at the given indices (normals carried along).
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        let mut normals = self.normals.as_ref().map(|_| Vec::new());
        for &i in indices {
            coords.extend_from_slice(self.point(i));
            if let (Some(out), Some(n)) = (normals.as_mut(), self.normal(i)) {
                out.extend_from_slice(n);
            }
        }
        PointCloud {
            dim: self.dim,
            coords,
            normals,
        }
    }

    /// Axis-aligned bounds `(lower, upper)`.
    pub fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.is_empty() {
            return None;
        }
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.iter() {
            for a in 0..self.dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }
}

/// Axis-aligned bounding region Ω.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundingBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::config("bounding box lower corner must be below upper corner"));
        }
        Ok(Self { lower, upper })
    }

    /// `[-0.5, 0.5]^dim`, the domain of a normalized cloud.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![-0.5; dim],
            upper: vec![0.5; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.extent(a)).product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *x >= *l && *x <= *u)
    }

    /// `n` points uniformly distributed in the box, appended row-major.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, out: &mut Vec<f64>) {
        out.reserve(n * self.dim());
        for _ in 0..n {
            for a in 0..self.dim() {
                out.push(self.lower[a] + rng.random::<f64>() * self.extent(a));
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn distance_squared(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    distance_squared(a, b).sqrt()
}
