use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use super::{mean_stdev, median};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::BoundingBox;
use crate::io::svg::{LinePlot, Series};
use crate::losses::ssa_estimate;
use crate::mesher::{extract_level_set, level_set_integral_inv_gradnorm};
use crate::rng::{stream, Purpose};

// bounds memory for very large K
const CHUNK: usize = 1 << 16;

/// `|Ω|·(α/2)·mean(exp(−α|f|))` over `k` uniform samples, drawn in chunks.
pub fn ssa_monte_carlo<R: Rng + ?Sized>(
    field: &dyn ScalarField,
    domain: &BoundingBox,
    alpha: f64,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::EmptyInput("ssa samples"));
    }
    let mut total = 0.0;
    let mut done = 0;
    let mut xs = Vec::new();
    while done < k {
        let n = CHUNK.min(k - done);
        xs.clear();
        domain.sample_uniform(rng, n, &mut xs);
        total += ssa_estimate(field, &xs, alpha, domain.volume())? * n as f64;
        done += n;
    }
    Ok(total / k as f64)
}

pub struct SsaExperiment<'a> {
    pub field: &'a dyn ScalarField,
    pub domain: BoundingBox,
    pub alphas: Vec<f64>,
    /// K per estimate.
    pub samples: usize,
    pub repeats: usize,
    /// Marching resolution for the oracle level set.
    pub mesh_resolution: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SsaRow {
    pub alpha: f64,
    pub mean: f64,
    pub stdev: f64,
    /// `∫_S 1/‖∇ₓf‖` on the extracted level set.
    pub mesh_oracle: f64,
    /// Area (3D) or length (2D) of the extracted level set.
    pub area: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SsaReport {
    pub rows: Vec<SsaRow>,
    /// Median `‖∇ₓf‖` over uniform samples of the level set.
    pub median_grad_norm: f64,
}

pub fn run_ssa_experiment(exp: &SsaExperiment) -> Result<SsaReport> {
    if exp.repeats < 2 {
        return Err(Error::config("ssa experiment needs at least 2 repeats"));
    }
    if exp.samples == 0 || exp.alphas.is_empty() {
        return Err(Error::config("ssa experiment needs samples and at least one alpha"));
    }
    let set = extract_level_set(exp.field, &exp.domain, exp.mesh_resolution)?;
    let oracle = level_set_integral_inv_gradnorm(&set, exp.field)?;
    let area = set.measure();

    let jobs = exp.alphas.len() * exp.repeats;
    let mut rng = stream(exp.seed, jobs as u64, Purpose::Experiment);
    let on_surface = set.sample_uniform(2000, &mut rng)?;
    let (_, grads) = exp.field.values_and_gradients(&on_surface);
    let d = exp.domain.dim();
    let median_grad_norm = median(grads.chunks_exact(d).map(crate::geometry::norm).collect());

    let estimates: Vec<f64> = (0..jobs)
        .into_par_iter()
        .map(|j| {
            let alpha = exp.alphas[j / exp.repeats];
            let mut rng = stream(exp.seed, j as u64, Purpose::Experiment);
            ssa_monte_carlo(exp.field, &exp.domain, alpha, exp.samples, &mut rng)
        })
        .collect::<Result<_>>()?;
    let rows = exp
        .alphas
        .iter()
        .zip(estimates.chunks_exact(exp.repeats))
        .map(|(&alpha, est)| {
            let (mean, stdev) = mean_stdev(est);
            SsaRow {
                alpha,
                mean,
                stdev,
                mesh_oracle: oracle,
                area,
            }
        })
        .collect();
    Ok(SsaReport {
        rows,
        median_grad_norm,
    })
}

impl SsaReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", "mean", "stdev", "mesh_oracle", "area", "median_grad_norm"])?;
        for r in &self.rows {
            w.write_record(
                [r.alpha, r.mean, r.stdev, r.mesh_oracle, r.area, self.median_grad_norm].map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Estimate against α with one-stdev bars, beside the oracle and area.
    pub fn to_svg(&self) -> String {
        let line = |name: &str, f: &dyn Fn(&SsaRow) -> (f64, Option<f64>)| Series {
            name: name.to_string(),
            points: self
                .rows
                .iter()
                .map(|r| {
                    let (y, e) = f(r);
                    (r.alpha, y, e)
                })
                .collect(),
        };
        LinePlot {
            title: "SSA estimate vs alpha".into(),
            x_label: "alpha".into(),
            y_label: "estimate".into(),
            log_x: true,
            series: vec![
                line("sample average", &|r| (r.mean, Some(r.stdev))),
                line("integral of 1/|grad f|", &|r| (r.mesh_oracle, None)),
                line("area", &|r| (r.area, None)),
            ],
        }
        .to_svg()
    }
}
