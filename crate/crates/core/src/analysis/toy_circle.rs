//! The circle family `f(θ, x) = ‖x‖ − θ` fitted to points on a circle of
//! radius `r`, where the SSA integral has a closed form.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::io::svg::{LinePlot, Series};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyCircleSpec {
    /// r
    pub radius: f64,
    /// μ
    pub weight: f64,
    /// p, 1 or 2.
    pub exponent: u32,
}

impl ToyCircleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::config("toy circle radius must be positive"));
        }
        if !(self.weight >= 0.0) {
            return Err(Error::config("toy circle weight must be non-negative"));
        }
        if !matches!(self.exponent, 1 | 2) {
            return Err(Error::config(format!("toy circle exponent must be 1 or 2, got {}", self.exponent)));
        }
        Ok(())
    }
}

/// Minimiser of the α → ∞ loss `|r − θ|^p + 2πμθ`.
pub fn toy_circle_minimizer(spec: &ToyCircleSpec) -> Result<f64> {
    spec.validate()?;
    let (r, mu) = (spec.radius, spec.weight);
    Ok(match spec.exponent {
        2 => (r - PI * mu).max(0.0),
        // at μ = 1/(2π) every θ in [0, r] is optimal; keep the data fit
        _ if mu <= 1.0 / (2.0 * PI) => r,
        _ => 0.0,
    })
}

/// `|r − θ|^p + μ(2πθ + (π/α)e^{−αθ})` for `θ ≥ 0`.
pub fn toy_circle_loss(spec: &ToyCircleSpec, alpha: f64, theta: f64) -> f64 {
    let data = (spec.radius - theta).abs().powi(spec.exponent as i32);
    data + spec.weight * (2.0 * PI * theta + PI / alpha * (-alpha * theta).exp())
}

/// dL/dθ, using the zero subgradient of `|r − θ|` at `θ = r`.
pub fn toy_circle_loss_derivative(spec: &ToyCircleSpec, alpha: f64, theta: f64) -> f64 {
    let e = theta - spec.radius;
    let data = match spec.exponent {
        1 => {
            if e == 0.0 {
                0.0
            } else {
                e.signum()
            }
        }
        _ => 2.0 * e,
    };
    data + spec.weight * PI * (2.0 - (-alpha * theta).exp())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyDescent {
    /// Lowest-loss iterate.
    pub theta: f64,
    pub loss: f64,
    /// Iterate after the last step.
    pub last: f64,
}

/// Projected (sub)gradient descent on the exact finite-α loss, steps
/// `lr/√(k+1)` clipped at θ = 0, keeping the best iterate.
pub fn toy_circle_descent(
    spec: &ToyCircleSpec,
    alpha: f64,
    theta0: f64,
    steps: usize,
    lr: f64,
) -> Result<ToyDescent> {
    spec.validate()?;
    if !(theta0 > 0.0) || !(alpha > 0.0) || !(lr > 0.0) {
        return Err(Error::config("toy circle descent needs θ₀ > 0, α > 0 and lr > 0"));
    }
    let upper = 10.0 * spec.radius;
    let mut theta = theta0;
    let mut best = ToyDescent {
        theta,
        loss: toy_circle_loss(spec, alpha, theta),
        last: theta,
    };
    for k in 0..steps {
        let g = toy_circle_loss_derivative(spec, alpha, theta);
        theta = (theta - lr / ((k + 1) as f64).sqrt() * g).max(0.0);
        if !theta.is_finite() || theta > upper {
            return Err(Error::Diverged {
                what: "toy circle descent",
                step: k,
            });
        }
        let loss = toy_circle_loss(spec, alpha, theta);
        if loss < best.loss {
            best.theta = theta;
            best.loss = loss;
        }
    }
    best.last = theta;
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyCircleRow {
    pub weight: f64,
    pub closed_form: f64,
    pub descent: f64,
}

/// Closed form and descent result across a grid of weights, starting each
/// descent at θ₀ = r.
pub fn toy_circle_sweep(
    radius: f64,
    exponent: u32,
    weights: &[f64],
    alpha: f64,
    steps: usize,
    lr: f64,
) -> Result<Vec<ToyCircleRow>> {
    weights
        .iter()
        .map(|&weight| {
            let spec = ToyCircleSpec {
                radius,
                weight,
                exponent,
            };
            Ok(ToyCircleRow {
                weight,
                closed_form: toy_circle_minimizer(&spec)?,
                descent: toy_circle_descent(&spec, alpha, radius, steps, lr)?.theta,
            })
        })
        .collect()
}

pub fn write_toy_circle_csv<W: Write>(rows: &[ToyCircleRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mu", "theta_closed_form", "theta_descent"])?;
    for r in rows {
        w.write_record([r.weight, r.closed_form, r.descent].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// θ̂ against μ.
pub fn toy_circle_svg(rows: &[ToyCircleRow]) -> String {
    LinePlot {
        title: "fitted radius vs weight".into(),
        x_label: "mu".into(),
        y_label: "theta".into(),
        log_x: false,
        series: vec![
            Series {
                name: "closed form".into(),
                points: rows.iter().map(|r| (r.weight, r.closed_form, None)).collect(),
            },
            Series {
                name: "descent".into(),
                points: rows.iter().map(|r| (r.weight, r.descent, None)).collect(),
            },
        ],
    }
    .to_svg()
}
