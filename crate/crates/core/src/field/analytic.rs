use crate::geometry::{dot, norm};

use super::ScalarField;

/// Closed-form fields used as test oracles.
#[derive(Clone, Debug, PartialEq)]
pub enum AnalyticSdf {
    /// `‖x − c‖ − r`, any dimension.
    Sphere { center: Vec<f64>, radius: f64 },
    /// `‖x‖ − r` in 2D.
    Circle { radius: f64 },
    /// `n̂ · x − offset` with unit `n̂`.
    Plane { normal: Vec<f64>, offset: f64 },
    /// `c · (d̂ · x − offset)`; an SDF only when `c = ±1`.
    ScaledLinear {
        direction: Vec<f64>,
        offset: f64,
        scale: f64,
    },
    Constant { dim: usize, value: f64 },
    /// Exact SDF of an axis-aligned box.
    Box {
        center: Vec<f64>,
        half_extents: Vec<f64>,
    },
    /// `factor · inner(x)`.
    Scaled { inner: Box<AnalyticSdf>, factor: f64 },
}

impl AnalyticSdf {
    pub fn sphere(center: &[f64], radius: f64) -> Self {
        AnalyticSdf::Sphere {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn origin_sphere(dim: usize, radius: f64) -> Self {
        Self::sphere(&vec![0.0; dim], radius)
    }

    pub fn plane(normal: &[f64], offset: f64) -> Self {
        let n = norm(normal);
        AnalyticSdf::Plane {
            normal: normal.iter().map(|v| v / n).collect(),
            offset,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        AnalyticSdf::Scaled {
            inner: Box::new(self),
            factor,
        }
    }

    fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        match self {
            AnalyticSdf::Sphere { center, radius } => {
                sphere_value_grad(x, center, *radius, g)
            }
            AnalyticSdf::Circle { radius } => sphere_value_grad(x, &[0.0, 0.0], *radius, g),
            AnalyticSdf::Plane { normal, offset } => {
                g.copy_from_slice(normal);
                dot(normal, x) - offset
            }
            AnalyticSdf::ScaledLinear {
                direction,
                offset,
                scale,
            } => {
                for (gi, di) in g.iter_mut().zip(direction) {
                    *gi = scale * di;
                }
                scale * (dot(direction, x) - offset)
            }
            AnalyticSdf::Constant { value, .. } => {
                g.fill(0.0);
                *value
            }
            AnalyticSdf::Box {
                center,
                half_extents,
            } => box_value_grad(x, center, half_extents, g),
            AnalyticSdf::Scaled { inner, factor } => {
                let v = inner.value_grad(x, g);
                for gi in g.iter_mut() {
                    *gi *= factor;
                }
                factor * v
            }
        }
    }
}

fn sphere_value_grad(x: &[f64], center: &[f64], radius: f64, g: &mut [f64]) -> f64 {
    let mut r2 = 0.0;
    for (gi, (xi, ci)) in g.iter_mut().zip(x.iter().zip(center)) {
        *gi = xi - ci;
        r2 += *gi * *gi;
    }
    let r = r2.sqrt();
    if r > 0.0 {
        for gi in g.iter_mut() {
            *gi /= r;
        }
    }
    r - radius
}

fn box_value_grad(x: &[f64], center: &[f64], half: &[f64], g: &mut [f64]) -> f64 {
    let d = x.len();
    let mut q = vec![0.0; d];
    let mut sign = vec![0.0; d];
    for a in 0..d {
        let p = x[a] - center[a];
        sign[a] = if p < 0.0 { -1.0 } else { 1.0 };
        q[a] = p.abs() - half[a];
    }
    let outside: f64 = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
    g.fill(0.0);
    if outside > 0.0 {
        for a in 0..d {
            g[a] = sign[a] * q[a].max(0.0) / outside;
        }
        outside
    } else {
        let (axis, inner) = q
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (a, &v)| if v > acc.1 { (a, v) } else { acc });
        g[axis] = sign[axis];
        inner
    }
}

impl ScalarField for AnalyticSdf {
    fn dim(&self) -> usize {
        match self {
            AnalyticSdf::Sphere { center, .. } => center.len(),
            AnalyticSdf::Circle { .. } => 2,
            AnalyticSdf::Plane { normal, .. } => normal.len(),
            AnalyticSdf::ScaledLinear { direction, .. } => direction.len(),
            AnalyticSdf::Constant { dim, .. } => *dim,
            AnalyticSdf::Box { center, .. } => center.len(),
            AnalyticSdf::Scaled { inner, .. } => inner.dim(),
        }
    }

    fn values(&self, xs: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut g = vec![0.0; d];
        xs.chunks_exact(d).map(|x| self.value_grad(x, &mut g)).collect()
    }

    fn values_and_gradients(&self, xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut grads = vec![0.0; xs.len()];
        let values = xs
            .chunks_exact(d)
            .zip(grads.chunks_exact_mut(d))
            .map(|(x, g)| self.value_grad(x, g))
            .collect();
        (values, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{eval, grad_x};

    #[test]
    fn sphere_surface_point_is_zero() {
        let s = AnalyticSdf::origin_sphere(3, 0.3);
        assert_eq!(eval(&s, &[0.3, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn constant_field_is_constant() {
        let c = AnalyticSdf::Constant { dim: 3, value: 0.0 };
        assert_eq!(eval(&c, &[0.1, -0.2, 0.4]).unwrap(), 0.0);
        assert_eq!(grad_x(&c, &[0.1, -0.2, 0.4]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn sphere_gradient_is_radial() {
        let s = AnalyticSdf::origin_sphere(3, 0.3);
        let x = [0.1, -0.4, 0.25];
        let g = grad_x(&s, &x).unwrap();
        let r = norm(&x);
        for a in 0..3 {
            assert!((g[a] - x[a] / r).abs() < 1e-15);
        }
    }

    #[test]
    fn plane_gradient_is_normal() {
        let p = AnalyticSdf::plane(&[1.0, 2.0, 2.0], 0.1);
        let g = grad_x(&p, &[0.3, 0.3, 0.3]).unwrap();
        assert_eq!(g, vec![1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn unit_gradient_norm_away_from_singularities() {
        let fields = [
            AnalyticSdf::origin_sphere(3, 0.35),
            AnalyticSdf::plane(&[0.3, -0.5, 0.8], 0.05),
            AnalyticSdf::Circle { radius: 0.3 },
            AnalyticSdf::Box {
                center: vec![0.0, 0.1, 0.0],
                half_extents: vec![0.2, 0.3, 0.1],
            },
        ];
        for f in &fields {
            let d = f.dim();
            for i in 0..50 {
                let x: Vec<f64> = (0..d)
                    .map(|a| ((i * 7 + a * 13) % 23) as f64 / 23.0 - 0.47)
                    .collect();
                let g = grad_x(f, &x).unwrap();
                assert!((norm(&g) - 1.0).abs() < 1e-12, "{f:?} at {x:?}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let s = AnalyticSdf::origin_sphere(3, 0.3);
        assert!(eval(&s, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn box_sdf_matches_distance_outside() {
        let b = AnalyticSdf::Box {
            center: vec![0.0, 0.0],
            half_extents: vec![0.3, 0.3],
        };
        assert!((eval(&b, &[0.6, 0.7]).unwrap() - (0.09f64 + 0.16).sqrt()).abs() < 1e-15);
        assert!((eval(&b, &[0.1, 0.0]).unwrap() + 0.2).abs() < 1e-15);
    }
}
