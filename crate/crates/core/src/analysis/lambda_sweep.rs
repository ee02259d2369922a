use std::io::Write;

use rayon::prelude::*;

use super::median;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{norm, PointCloud};
use crate::mesher::{extract_level_set, LevelSet};
use crate::metrics::chamfer;
use crate::rng::{stream, Purpose};
use crate::sampler::{eikonal_sample_points, EikonalSampleSpec};
use crate::trainer::{fit, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaSweepConfig {
    pub lambdas: Vec<f64>,
    pub eval_resolution: usize,
    /// Level-set samples for the Chamfer distance to the cloud.
    pub eval_samples: usize,
    pub histogram_bins: usize,
    /// Upper edge of the last bin; larger norms land in it too.
    pub histogram_max: f64,
}

impl Default for LambdaSweepConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.1, 0.5, 1.0],
            eval_resolution: 256,
            eval_samples: 5000,
            histogram_bins: 20,
            histogram_max: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaSweepRow {
    pub lambda: f64,
    /// Length (2D) or area (3D); 0 when the level set is empty.
    pub measure: f64,
    pub components: usize,
    /// Symmetric Chamfer distance from level-set samples to the cloud; NaN
    /// when the level set is empty.
    pub cd: f64,
    pub grad_median: f64,
    pub histogram: Vec<usize>,
    /// λ = 0 leaves the gradient norm unconstrained.
    pub degenerate_risk: bool,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaSweepReport {
    pub rows: Vec<LambdaSweepRow>,
    pub histogram_max: f64,
}

fn components(set: &LevelSet) -> usize {
    match set {
        LevelSet::Contour(c) => c.components().len(),
        LevelSet::Mesh(_) => 1,
    }
}

/// Fit once per λ from the same seed and record shape and gradient
/// statistics. `cloud` must already be in the training frame.
pub fn lambda_sweep(cloud: &PointCloud, base: &TrainConfig, sweep: &LambdaSweepConfig) -> Result<LambdaSweepReport> {
    if sweep.lambdas.is_empty() || sweep.histogram_bins == 0 || !(sweep.histogram_max > 0.0) {
        return Err(Error::config("lambda sweep needs lambdas and a non-empty histogram"));
    }
    let domain = base.domain();
    let d = cloud.dim();
    // gradient norms near the cloud, from the eikonal local scheme
    let spec = EikonalSampleSpec::from_cloud(cloud, &base.sampling)?;
    let all: Vec<usize> = (0..cloud.len()).collect();
    let near = eikonal_sample_points(
        cloud,
        &all,
        &EikonalSampleSpec { n_global: 0, ..spec },
        &domain,
        &mut stream(base.seed, 0, Purpose::Experiment),
    );

    let rows = sweep
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let mut cfg = base.clone();
            cfg.loss.eikonal_weight = lambda;
            let state = fit(cloud, &cfg)?;
            let net = &state.network;

            let (_, grads) = net.values_and_gradients(&near);
            let norms: Vec<f64> = grads.chunks_exact(d).map(norm).collect();
            let mut histogram = vec![0; sweep.histogram_bins];
            let width = sweep.histogram_max / sweep.histogram_bins as f64;
            for &g in &norms {
                let b = ((g / width) as usize).min(sweep.histogram_bins - 1);
                histogram[b] += 1;
            }

            let (measure, comps, cd) = match extract_level_set(net, &domain, sweep.eval_resolution) {
                Ok(set) => {
                    let mut rng = stream(cfg.seed, 0, Purpose::Metrics);
                    let pts = PointCloud::new(d, set.sample_uniform(sweep.eval_samples, &mut rng)?)?;
                    (set.measure(), components(&set), chamfer(&pts, cloud)?)
                }
                Err(Error::EmptyLevelSet) => {
                    log::warn!("lambda {lambda}: empty level set");
                    (0.0, 0, f64::NAN)
                }
                Err(e) => return Err(e),
            };
            Ok(LambdaSweepRow {
                lambda,
                measure,
                components: comps,
                cd,
                grad_median: median(norms),
                histogram,
                degenerate_risk: lambda == 0.0,
                final_loss: state.history.back().copied().unwrap_or(f64::NAN),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LambdaSweepReport {
        rows,
        histogram_max: sweep.histogram_max,
    })
}

impl LambdaSweepReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "lambda",
            "measure",
            "components",
            "cd",
            "grad_median",
            "final_loss",
            "degenerate_risk",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.lambda.to_string(),
                r.measure.to_string(),
                r.components.to_string(),
                r.cd.to_string(),
                r.grad_median.to_string(),
                r.final_loss.to_string(),
                r.degenerate_risk.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long format: one row per (λ, bin).
    pub fn write_histogram_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "bin_lo", "bin_hi", "count"])?;
        for r in &self.rows {
            let width = self.histogram_max / r.histogram.len() as f64;
            for (b, c) in r.histogram.iter().enumerate() {
                let hi = if b + 1 == r.histogram.len() {
                    f64::INFINITY
                } else {
                    (b + 1) as f64 * width
                };
                w.write_record([r.lambda.to_string(), (b as f64 * width).to_string(), hi.to_string(), c.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
