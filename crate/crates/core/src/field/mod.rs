//! Scalar fields `f(θ, x)`: the trainable MLP, analytic SDFs used as
//! oracles, and the derivative primitives every loss is built from.

mod analytic;
mod checkpoint;
mod mlp;

pub use analytic::AnalyticSdf;
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub(crate) use checkpoint::{lookup, parse, read_text_block};
pub use mlp::{FieldConfig, LayerView, Mlp, Network};

use crate::error::{Error, Result};

/// A scalar field over 2D or 3D space, evaluated in batches.
///
/// Point batches are row-major `n * dim` slices.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn values(&self, xs: &[f64]) -> Vec<f64>;

    /// Values and spatial gradients `∇ₓf`, the latter row-major `n * dim`.
    fn values_and_gradients(&self, xs: &[f64]) -> (Vec<f64>, Vec<f64>);

    /// Trainable view of this field, if it has parameters.
    fn parametric(&self) -> Option<&dyn ParametricField> {
        None
    }
}

/// A field with a flat parameter vector θ.
pub trait ParametricField: ScalarField {
    fn num_params(&self) -> usize;

    fn params_flat(&self) -> Vec<f64>;

    fn set_params_flat(&mut self, flat: &[f64]) -> Result<()>;

    /// Vector-Jacobian product over a batch:
    ///
    /// `Σᵢ seed_value[i] · ∇_θ f(xᵢ) + ∇_θ (seed_gradient[i] · ∇ₓ f(xᵢ))`
    ///
    /// with `seed_gradient` row-major `n * dim`. Every loss gradient in the
    /// crate reduces to one or two calls of this.
    fn param_vjp(&self, xs: &[f64], seed_value: &[f64], seed_gradient: Option<&[f64]>)
        -> Vec<f64>;
}

fn check_point(field: &dyn ScalarField, x: &[f64]) -> Result<()> {
    if x.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_batch(field: &dyn ScalarField, xs: &[f64]) -> Result<usize> {
    let d = field.dim();
    if xs.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: xs.len() % d,
        });
    }
    Ok(xs.len() / d)
}

/// `f(θ, x)` at a single point.
pub fn eval(field: &dyn ScalarField, x: &[f64]) -> Result<f64> {
    check_point(field, x)?;
    Ok(field.values(x)[0])
}

/// Exact spatial gradient `∇ₓf(θ, x)`.
pub fn grad_x(field: &dyn ScalarField, x: &[f64]) -> Result<Vec<f64>> {
    check_point(field, x)?;
    Ok(field.values_and_gradients(x).1)
}

/// Exact parameter gradient `∇_θ f(θ, x)` at a fixed point.
pub fn grad_theta(field: &dyn ScalarField, x: &[f64]) -> Result<Vec<f64>> {
    check_point(field, x)?;
    let p = field.parametric().ok_or(Error::NoParameters)?;
    Ok(p.param_vjp(x, &[1.0], None))
}

/// `∇_θ [u · ∇ₓ f(θ, x)]`, linear in `u`.
pub fn grad_theta_dot(field: &dyn ScalarField, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_point(field, x)?;
    check_point(field, u)?;
    let p = field.parametric().ok_or(Error::NoParameters)?;
    Ok(p.param_vjp(x, &[0.0], Some(u)))
}
