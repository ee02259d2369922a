//! Numerical checks of the theory: SSA convergence to the surface
//! integral of `1/‖∇ₓf‖`, the toy-circle collapse, and an eikonal-weight
//! sweep.

mod lambda_sweep;
mod ssa;
mod toy_circle;

pub use lambda_sweep::{lambda_sweep, LambdaSweepConfig, LambdaSweepReport, LambdaSweepRow};
pub use ssa::{run_ssa_experiment, ssa_monte_carlo, SsaExperiment, SsaReport, SsaRow};
pub use toy_circle::{
    toy_circle_descent, toy_circle_loss, toy_circle_loss_derivative, toy_circle_minimizer, toy_circle_svg,
    toy_circle_sweep, write_toy_circle_csv,
    ToyCircleRow, ToyCircleSpec, ToyDescent,
};

pub(crate) fn mean_stdev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub(crate) fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}
