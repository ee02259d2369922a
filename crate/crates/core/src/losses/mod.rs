//! Training losses and their parameter gradients: eikonal, the IGR data
//! term, the SIREN off-surface (SSA) penalty, Neural-Pull, and the DiffCD
//! surface-to-points term with its minimum-norm level-set gradient.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{check_batch, ScalarField};
use crate::geometry::{dot, BoundingBox};
use crate::metrics::NearestNeighborIndex;
use crate::sampler::GRADIENT_FLOOR;

/// Distances below this give a surface sample no gradient.
pub const RESIDUAL_FLOOR: f64 = 1e-9;

/// Value of one loss term and its θ-gradient. The gradient is empty for
/// fields without parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Samples dropped or given zero gradient for numerical reasons.
    pub skipped: usize,
}

fn vjp(field: &dyn ScalarField, xs: &[f64], seed_value: &[f64], seed_gradient: Option<&[f64]>) -> Vec<f64> {
    match field.parametric() {
        Some(p) => p.param_vjp(xs, seed_value, seed_gradient),
        None => Vec::new(),
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn non_empty(field: &dyn ScalarField, xs: &[f64], what: &'static str) -> Result<usize> {
    let n = check_batch(field, xs)?;
    if n == 0 {
        return Err(Error::EmptyInput(what));
    }
    Ok(n)
}

/// Mean of `(‖∇ₓf‖ − 1)²`. Samples with a vanishing gradient contribute
/// their value but no gradient.
pub fn eikonal_loss(field: &dyn ScalarField, xs: &[f64]) -> Result<LossTerm> {
    let n = non_empty(field, xs, "eikonal samples")?;
    let d = field.dim();
    let (_, g) = field.values_and_gradients(xs);
    let mut value = 0.0;
    let mut skipped = 0;
    let mut seeds = vec![0.0; n * d];
    for (i, gi) in g.chunks_exact(d).enumerate() {
        let gn = dot(gi, gi).sqrt();
        value += (gn - 1.0) * (gn - 1.0);
        if gn < GRADIENT_FLOOR {
            skipped += 1;
            continue;
        }
        let c = 2.0 * (gn - 1.0) / (gn * n as f64);
        for a in 0..d {
            seeds[i * d + a] = c * gi[a];
        }
    }
    Ok(LossTerm {
        value: value / n as f64,
        gradient: vjp(field, xs, &vec![0.0; n], Some(&seeds)),
        skipped,
    })
}

/// Mean of `|f|` over cloud points; the subgradient at `f = 0` is 0.
pub fn data_term(field: &dyn ScalarField, xs: &[f64]) -> Result<LossTerm> {
    let n = non_empty(field, xs, "cloud batch")?;
    let f = field.values(xs);
    let value = f.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let seeds: Vec<f64> = f.iter().map(|&v| sign(v) / n as f64).collect();
    Ok(LossTerm {
        value,
        gradient: vjp(field, xs, &seeds, None),
        skipped: 0,
    })
}

/// `mean(exp(−α|f|))` over the given points, the effective SSA penalty per
/// unit of the rescaled weight μ.
pub fn ssa_penalty(field: &dyn ScalarField, xs: &[f64], alpha: f64) -> Result<LossTerm> {
    let n = non_empty(field, xs, "ssa samples")?;
    let f = field.values(xs);
    let mut value = 0.0;
    let mut seeds = Vec::with_capacity(n);
    for &v in &f {
        let e = (-alpha * v.abs()).exp();
        value += e;
        seeds.push(-alpha * sign(v) * e / n as f64);
    }
    Ok(LossTerm {
        value: value / n as f64,
        gradient: vjp(field, xs, &seeds, None),
        skipped: 0,
    })
}

/// Sample estimate `(|Ω|/K)(α/2) Σ exp(−α|f(xᵢ)|)` at given points.
pub fn ssa_estimate(field: &dyn ScalarField, xs: &[f64], alpha: f64, volume: f64) -> Result<f64> {
    let n = non_empty(field, xs, "ssa samples")?;
    let sum: f64 = field.values(xs).iter().map(|v| (-alpha * v.abs()).exp()).sum();
    Ok(volume / n as f64 * 0.5 * alpha * sum)
}

/// SSA loss over `k` fresh uniform samples in Ω, with gradient.
pub fn ssa_loss<R: Rng + ?Sized>(
    field: &dyn ScalarField,
    domain: &BoundingBox,
    alpha: f64,
    k: usize,
    rng: &mut R,
) -> Result<LossTerm> {
    if k == 0 {
        return Err(Error::EmptyInput("ssa samples"));
    }
    let mut xs = Vec::with_capacity(k * domain.dim());
    domain.sample_uniform(rng, k, &mut xs);
    let mut term = ssa_penalty(field, &xs, alpha)?;
    let scale = domain.volume() * 0.5 * alpha;
    term.value *= scale;
    term.gradient.iter_mut().for_each(|g| *g *= scale);
    Ok(term)
}

/// `x − f·∇ₓf/‖∇ₓf‖`.
pub fn pull(field: &dyn ScalarField, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: x.len(),
        });
    }
    let (f, g) = field.values_and_gradients(x);
    let gn = dot(&g, &g).sqrt();
    if gn < GRADIENT_FLOOR {
        return Err(Error::VanishingGradient("pull"));
    }
    Ok(x.iter().zip(&g).map(|(xa, ga)| xa - f[0] * ga / gn).collect())
}

/// Mean over samples of `‖closest_P(x) − pull(x)‖`; the correspondence is
/// held fixed and the gradient flows through the pull.
pub fn neural_pull_loss(
    field: &dyn ScalarField,
    cloud: &NearestNeighborIndex,
    samples: &[f64],
) -> Result<LossTerm> {
    let n = non_empty(field, samples, "neural-pull samples")?;
    let d = field.dim();
    let targets = cloud.nearest_batch(samples);
    let (f, g) = field.values_and_gradients(samples);
    let mut value = 0.0;
    let mut used = 0usize;
    let mut seed_value = vec![0.0; n];
    let mut seed_gradient = vec![0.0; n * d];
    let mut skipped = 0;
    // first pass for the mean's denominator
    let valid: Vec<bool> = g
        .chunks_exact(d)
        .map(|gi| dot(gi, gi).sqrt() >= GRADIENT_FLOOR)
        .collect();
    let count = valid.iter().filter(|&&v| v).count();
    if count == 0 {
        return Err(Error::VanishingGradient("every neural-pull sample"));
    }
    for i in 0..n {
        if !valid[i] {
            skipped += 1;
            continue;
        }
        let x = &samples[i * d..(i + 1) * d];
        let gi = &g[i * d..(i + 1) * d];
        let gn = dot(gi, gi).sqrt();
        let p = cloud.point(targets[i].0);
        let r: Vec<f64> = (0..d).map(|a| p[a] - (x[a] - f[i] * gi[a] / gn)).collect();
        let dist = dot(&r, &r).sqrt();
        value += dist;
        used += 1;
        if dist < RESIDUAL_FLOOR {
            continue;
        }
        let v: Vec<f64> = r.iter().map(|c| c / dist).collect();
        let vn = (0..d).map(|a| v[a] * gi[a] / gn).sum::<f64>();
        let m = count as f64;
        seed_value[i] = vn / m;
        for a in 0..d {
            // f · (I − n̂n̂ᵀ) v / ‖g‖
            seed_gradient[i * d + a] = f[i] * (v[a] - vn * gi[a] / gn) / (gn * m);
        }
    }
    Ok(LossTerm {
        value: value / used as f64,
        gradient: vjp(field, samples, &seed_value, Some(&seed_gradient)),
        skipped,
    })
}

/// Mean distance from level-set samples to the cloud. The gradient of each
/// distance uses the minimum-norm surface motion `∇_θx = −f_θ g/‖g‖²`:
///
/// `∇_θ‖x − x̃‖ = −f_θ (x − x̃)·g / (‖x − x̃‖ ‖g‖²)`
pub fn surface_to_points_term(
    field: &dyn ScalarField,
    samples: &[f64],
    cloud: &NearestNeighborIndex,
) -> Result<LossTerm> {
    let n = non_empty(field, samples, "surface samples")?;
    let d = field.dim();
    let nearest = cloud.nearest_batch(samples);
    let (_, g) = field.values_and_gradients(samples);
    let value = nearest.iter().map(|(_, dist)| dist).sum::<f64>() / n as f64;
    let mut seeds = vec![0.0; n];
    let mut skipped = 0;
    for i in 0..n {
        let gi = &g[i * d..(i + 1) * d];
        let g2 = dot(gi, gi);
        let (j, dist) = nearest[i];
        if g2.sqrt() < GRADIENT_FLOOR || dist < RESIDUAL_FLOOR {
            skipped += 1;
            continue;
        }
        let x = &samples[i * d..(i + 1) * d];
        let p = cloud.point(j);
        let rg: f64 = (0..d).map(|a| (x[a] - p[a]) * gi[a]).sum();
        seeds[i] = -rg / (dist * g2 * n as f64);
    }
    Ok(LossTerm {
        value,
        gradient: vjp(field, samples, &seeds, None),
        skipped,
    })
}

/// The implied surface-point derivative `∇_θx = −f_θ g/‖g‖²` for one
/// scalar parameter, given `f_θ` and `g` at the point.
pub fn level_set_point_derivative(f_theta: f64, g: &[f64]) -> Vec<f64> {
    let g2 = dot(g, g);
    g.iter().map(|ga| -f_theta * ga / g2).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossVariant {
    Igr,
    Siren,
    NeuralPull,
    DiffCd,
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossVariant::Igr => "igr",
            LossVariant::Siren => "siren",
            LossVariant::NeuralPull => "neural-pull",
            LossVariant::DiffCd => "diffcd",
        })
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "igr" => Ok(LossVariant::Igr),
            "siren" => Ok(LossVariant::Siren),
            "neural-pull" | "neuralpull" | "np" => Ok(LossVariant::NeuralPull),
            "diffcd" => Ok(LossVariant::DiffCd),
            other => Err(Error::config(format!(
                "unknown loss variant '{other}' (expected igr, siren, neural-pull or diffcd)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub variant: LossVariant,
    /// λ
    pub eikonal_weight: f64,
    /// Rescaled μ; the penalty applied is `μ · mean(exp(−α|f|))`.
    pub ssa_weight: f64,
    /// α
    pub ssa_sharpness: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::DiffCd,
            eikonal_weight: 0.1,
            ssa_weight: 0.033,
            ssa_sharpness: 100.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eikonal_weight >= 0.0) {
            return Err(Error::config("loss.lambda must be non-negative"));
        }
        if !(self.ssa_weight >= 0.0) {
            return Err(Error::config("loss.mu must be non-negative"));
        }
        if !(self.ssa_sharpness > 0.0) {
            return Err(Error::config("loss.alpha must be positive"));
        }
        Ok(())
    }
}

/// Point sets for one composite evaluation, row-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBatch {
    pub cloud: Vec<f64>,
    pub eikonal: Vec<f64>,
    pub ssa: Option<Vec<f64>>,
    /// Accepted level-set samples (DiffCD).
    pub surface: Option<Vec<f64>>,
    /// Local samples near the cloud (Neural-Pull).
    pub local: Option<Vec<f64>>,
}

/// Named components of a composite loss; `None` when a variant does not use
/// the term.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub data: Option<f64>,
    pub eikonal: Option<f64>,
    pub ssa: Option<f64>,
    pub surface_to_points: Option<f64>,
    pub neural_pull: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub components: LossComponents,
    pub gradient: Vec<f64>,
    /// Eikonal samples with a vanishing gradient.
    pub eikonal_skipped: usize,
}

impl LossValue {
    /// Weighted sum of the components under `cfg`.
    pub fn recompute_total(&self, cfg: &LossConfig) -> f64 {
        let c = &self.components;
        let get = |v: Option<f64>| v.unwrap_or(0.0);
        let eik = cfg.eikonal_weight * get(c.eikonal);
        match cfg.variant {
            LossVariant::Igr => get(c.data) + eik,
            LossVariant::Siren => get(c.data) + eik + cfg.ssa_weight * get(c.ssa),
            LossVariant::DiffCd => 0.5 * (get(c.data) + get(c.surface_to_points)) + eik,
            LossVariant::NeuralPull => get(c.neural_pull),
        }
    }

    /// First non-finite component, for diagnostics.
    pub fn non_finite_component(&self) -> Option<&'static str> {
        let c = &self.components;
        let named = [
            ("data", c.data),
            ("eikonal", c.eikonal),
            ("ssa", c.ssa),
            ("surface_to_points", c.surface_to_points),
            ("neural_pull", c.neural_pull),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| v.is_some_and(|v| !v.is_finite())) {
            return Some(name);
        }
        if !self.total.is_finite() || self.gradient.iter().any(|g| !g.is_finite()) {
            return Some("gradient");
        }
        None
    }
}

fn add_scaled(total: &mut Vec<f64>, part: &[f64], w: f64) {
    if total.is_empty() {
        total.resize(part.len(), 0.0);
    }
    for (t, p) in total.iter_mut().zip(part) {
        *t += w * p;
    }
}

/// Evaluate the configured variant:
///
/// - IGR: `data + λ·eikonal`
/// - SIREN: `data + λ·eikonal + μ·mean(exp(−α|f|))`
/// - DiffCD: `½(data + surface_to_points) + λ·eikonal`
/// - Neural-Pull: the pull loss alone
///
/// An empty DiffCD surface set drops the surface-to-points term for this
/// evaluation.
pub fn composite_loss(
    field: &dyn ScalarField,
    batch: &LossBatch,
    cloud: &NearestNeighborIndex,
    cfg: &LossConfig,
) -> Result<LossValue> {
    let mut components = LossComponents::default();
    let mut gradient = Vec::new();
    let mut eikonal_skipped = 0;
    let mut eikonal = |components: &mut LossComponents, gradient: &mut Vec<f64>| -> Result<()> {
        let t = eikonal_loss(field, &batch.eikonal)?;
        eikonal_skipped = t.skipped;
        components.eikonal = Some(t.value);
        add_scaled(gradient, &t.gradient, cfg.eikonal_weight);
        Ok(())
    };
    match cfg.variant {
        LossVariant::Igr | LossVariant::Siren => {
            let t = data_term(field, &batch.cloud)?;
            components.data = Some(t.value);
            add_scaled(&mut gradient, &t.gradient, 1.0);
            eikonal(&mut components, &mut gradient)?;
            if cfg.variant == LossVariant::Siren {
                let xs = batch.ssa.as_ref().ok_or(Error::MissingSamples("ssa samples for siren"))?;
                let t = ssa_penalty(field, xs, cfg.ssa_sharpness)?;
                components.ssa = Some(t.value);
                add_scaled(&mut gradient, &t.gradient, cfg.ssa_weight);
            }
        }
        LossVariant::DiffCd => {
            let surface = batch
                .surface
                .as_ref()
                .ok_or(Error::MissingSamples("surface samples for diffcd"))?;
            let t = data_term(field, &batch.cloud)?;
            components.data = Some(t.value);
            add_scaled(&mut gradient, &t.gradient, 0.5);
            if surface.is_empty() {
                log::warn!("no accepted surface samples, surface-to-points term skipped");
            } else {
                let t = surface_to_points_term(field, surface, cloud)?;
                components.surface_to_points = Some(t.value);
                add_scaled(&mut gradient, &t.gradient, 0.5);
            }
            eikonal(&mut components, &mut gradient)?;
        }
        LossVariant::NeuralPull => {
            let local = batch
                .local
                .as_ref()
                .ok_or(Error::MissingSamples("local samples for neural-pull"))?;
            let t = neural_pull_loss(field, cloud, local)?;
            components.neural_pull = Some(t.value);
            add_scaled(&mut gradient, &t.gradient, 1.0);
        }
    }
    let mut value = LossValue {
        total: 0.0,
        components,
        gradient,
        eikonal_skipped,
    };
    value.total = value.recompute_total(cfg);
    Ok(value)
}

#[cfg(test)]
mod tests;
