//! Stochastic point generation: surface-sample banks, SDF-descent
//! projection onto the level set, eikonal sample points, batch selection,
//! and point-cloud normalization.

mod normalize;

pub use normalize::{normalize_cloud, NormalizationTransform};

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::{check_batch, ScalarField};
use crate::geometry::{BoundingBox, PointCloud};
use crate::mesher::extract_level_set;
use crate::metrics::NearestNeighborIndex;

/// Floor on `‖∇ₓf‖` below which a descent step is refused.
pub const GRADIENT_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingConfig {
    /// Bank refresh period in iterations.
    pub k_mesh: usize,
    pub bank_size: usize,
    /// SDF-descent steps M.
    pub descent_steps: usize,
    /// Acceptance tolerance ε on `|f|` after descent.
    pub accept_tol: f64,
    pub train_mc_resolution: usize,
    pub local_knn_k: usize,
    pub local_std_scale: f64,
    pub n_global: usize,
    pub batch_surface: usize,
    pub batch_cloud: usize,
    /// Uniform-in-Ω samples for the SSA penalty.
    pub n_ssa: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            k_mesh: 1000,
            bank_size: 100_000,
            descent_steps: 4,
            accept_tol: 1e-3,
            train_mc_resolution: 128,
            local_knn_k: 50,
            local_std_scale: 0.2,
            n_global: 625,
            batch_surface: 5000,
            batch_cloud: 5000,
            n_ssa: 5000,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("k_mesh", self.k_mesh),
            ("bank_size", self.bank_size),
            ("descent_steps", self.descent_steps),
            ("train_mc_resolution", self.train_mc_resolution),
            ("local_knn_k", self.local_knn_k),
            ("n_global", self.n_global),
            ("batch_surface", self.batch_surface),
            ("batch_cloud", self.batch_cloud),
            ("n_ssa", self.n_ssa),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("sampling.{name} must be at least 1")));
        }
        if self.train_mc_resolution < 2 {
            return Err(Error::config("sampling.train_mc_resolution must be at least 2"));
        }
        if !(self.accept_tol > 0.0) {
            return Err(Error::config("sampling.accept_tol must be positive"));
        }
        if !(self.local_std_scale > 0.0) {
            return Err(Error::config("sampling.local_std_scale must be positive"));
        }
        Ok(())
    }
}

/// Run `M` steps of `x ← x − f·∇ₓf/‖∇ₓf‖` on every row of `xs`. Rows whose
/// gradient underflows, or whose final `|f|` exceeds `tol`, come back `None`.
pub fn sdf_descent_batch(
    field: &dyn ScalarField,
    xs: &[f64],
    steps: usize,
    tol: f64,
) -> Result<Vec<Option<Vec<f64>>>> {
    if steps == 0 {
        return Err(Error::config("sdf descent needs at least one step"));
    }
    let n = check_batch(field, xs)?;
    let d = field.dim();
    let mut points = xs.to_vec();
    // indices of rows still alive
    let mut live: Vec<usize> = (0..n).collect();
    for _ in 0..steps {
        if live.is_empty() {
            break;
        }
        let batch: Vec<f64> = live
            .iter()
            .flat_map(|&i| points[i * d..(i + 1) * d].iter().copied())
            .collect();
        let (f, g) = field.values_and_gradients(&batch);
        let mut still = Vec::with_capacity(live.len());
        for (k, &i) in live.iter().enumerate() {
            let gk = &g[k * d..(k + 1) * d];
            let gn = gk.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn < GRADIENT_FLOOR || !gn.is_finite() {
                continue;
            }
            let step = f[k] / gn;
            for a in 0..d {
                points[i * d + a] -= step * gk[a];
            }
            still.push(i);
        }
        live = still;
    }
    let mut out = vec![None; n];
    if live.is_empty() {
        return Ok(out);
    }
    let batch: Vec<f64> = live
        .iter()
        .flat_map(|&i| points[i * d..(i + 1) * d].iter().copied())
        .collect();
    let f = field.values(&batch);
    for (k, &i) in live.iter().enumerate() {
        if f[k].abs() <= tol {
            out[i] = Some(points[i * d..(i + 1) * d].to_vec());
        }
    }
    Ok(out)
}

/// Single-point SDF-descent; `None` on rejection.
pub fn sdf_descent(field: &dyn ScalarField, p: &[f64], steps: usize, tol: f64) -> Result<Option<Vec<f64>>> {
    if p.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: p.len(),
        });
    }
    Ok(sdf_descent_batch(field, p, steps, tol)?.pop().flatten())
}

/// Points drawn uniformly from the level set extracted at a refresh.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceSampleBank {
    pub dim: usize,
    /// Row-major `bank_size * dim`.
    pub points: Vec<f64>,
    pub refreshed_at_iteration: usize,
    /// Triangles (3D) or segments (2D) in the source level set.
    pub source_elements: usize,
    /// Area (3D) or length (2D) of the source level set.
    pub source_measure: f64,
}

impl SurfaceSampleBank {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Extract the level set at `cfg.train_mc_resolution` (or `resolution` when
/// given) and sample `cfg.bank_size` points from it by area.
pub fn refresh_bank<R: Rng + ?Sized>(
    field: &dyn ScalarField,
    domain: &BoundingBox,
    cfg: &SamplingConfig,
    resolution: Option<usize>,
    iteration: usize,
    rng: &mut R,
) -> Result<SurfaceSampleBank> {
    let res = resolution.unwrap_or(cfg.train_mc_resolution);
    let set = extract_level_set(field, domain, res)?;
    let points = set.sample_uniform(cfg.bank_size, rng)?;
    log::debug!(
        "bank refreshed at iteration {iteration}: {} elements, measure {:.5}",
        set.num_elements(),
        set.measure()
    );
    Ok(SurfaceSampleBank {
        dim: field.dim(),
        points,
        refreshed_at_iteration: iteration,
        source_elements: set.num_elements(),
        source_measure: set.measure(),
    })
}

/// Accepted surface samples of one draw.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceDraw {
    /// Row-major accepted points, each with `|f| ≤ ε`.
    pub points: Vec<f64>,
    pub requested: usize,
    pub accepted: usize,
}

impl SurfaceDraw {
    pub fn acceptance_ratio(&self) -> f64 {
        if self.requested == 0 {
            1.0
        } else {
            self.accepted as f64 / self.requested as f64
        }
    }

    /// Below 10% acceptance the bank no longer tracks the level set.
    pub fn is_stale(&self) -> bool {
        self.acceptance_ratio() < 0.1
    }
}

/// Draw `k` bank points with replacement and re-project them onto the
/// current level set by SDF-descent.
pub fn draw_surface_samples<R: Rng + ?Sized>(
    bank: &SurfaceSampleBank,
    field: &dyn ScalarField,
    k: usize,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<SurfaceDraw> {
    if bank.is_empty() {
        return Err(Error::EmptyInput("surface sample bank"));
    }
    let d = bank.dim;
    let seeds: Vec<f64> = (0..k)
        .flat_map(|_| {
            let i = rng.random_range(0..bank.len());
            bank.points[i * d..(i + 1) * d].to_vec()
        })
        .collect();
    let projected = sdf_descent_batch(field, &seeds, cfg.descent_steps, cfg.accept_tol)?;
    let points: Vec<f64> = projected.into_iter().flatten().flatten().collect();
    let draw = SurfaceDraw {
        accepted: points.len() / d,
        points,
        requested: k,
    };
    if draw.is_stale() {
        log::warn!(
            "surface sample acceptance {:.1}% below 10%, bank from iteration {} is stale",
            100.0 * draw.acceptance_ratio(),
            bank.refreshed_at_iteration
        );
    }
    Ok(draw)
}

/// Per-point local standard deviations for eikonal samples near the cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct EikonalSampleSpec {
    pub sigmas: Vec<f64>,
    pub n_global: usize,
}

impl EikonalSampleSpec {
    /// `σᵢ = local_std_scale · (distance to the k-th neighbour)` with
    /// `k = min(local_knn_k, n − 1)`.
    pub fn from_cloud(cloud: &PointCloud, cfg: &SamplingConfig) -> Result<Self> {
        if cloud.len() < 2 {
            return Err(Error::Degenerate(
                "local eikonal spread needs at least two cloud points".into(),
            ));
        }
        let k = cfg.local_knn_k.min(cloud.len() - 1);
        let index = NearestNeighborIndex::from_cloud(cloud)?;
        let sigmas: Vec<f64> = cloud
            .iter()
            .map(|p| {
                // the point itself is among the k + 1 nearest
                let nn = index.knn(p, k + 1);
                cfg.local_std_scale * nn.last().expect("k + 1 >= 2 neighbours").1
            })
            .collect();
        if let Some(i) = sigmas.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::Degenerate(format!(
                "cloud point {i} has more than {k} duplicates, local spread is zero"
            )));
        }
        Ok(Self {
            sigmas,
            n_global: cfg.n_global,
        })
    }
}

/// `n_global` uniform points in Ω followed by one Gaussian perturbation of
/// each batch point with its own σ. Local points are not clamped to Ω.
pub fn eikonal_sample_points<R: Rng + ?Sized>(
    cloud: &PointCloud,
    batch: &[usize],
    spec: &EikonalSampleSpec,
    domain: &BoundingBox,
    rng: &mut R,
) -> Vec<f64> {
    let d = cloud.dim();
    let mut out = Vec::with_capacity((spec.n_global + batch.len()) * d);
    domain.sample_uniform(rng, spec.n_global, &mut out);
    for &i in batch {
        let sigma = spec.sigmas[i];
        for &c in cloud.point(i) {
            let z: f64 = rng.sample(StandardNormal);
            out.push(c + sigma * z);
        }
    }
    out
}

/// Batch indices into a cloud of `n` points: without replacement when
/// `size ≤ n`, otherwise with replacement.
pub fn draw_cloud_batch<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Vec<usize> {
    if size <= n {
        index::sample(rng, n, size).into_vec()
    } else {
        (0..size).map(|_| rng.random_range(0..n)).collect()
    }
}

/// Row-major gather of cloud points.
pub fn gather(cloud: &PointCloud, indices: &[usize]) -> Vec<f64> {
    indices.iter().flat_map(|&i| cloud.point(i).iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AnalyticSdf, FieldConfig, Network};
    use crate::geometry::distance;
    use crate::rng::{stream, Purpose};
    use crate::Precision;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn descent_examples() {
        let sphere = AnalyticSdf::origin_sphere(3, 0.3);
        let p = sdf_descent(&sphere, &[0.6, 0.0, 0.0], 1, 1e-3).unwrap().unwrap();
        assert_eq!(p, vec![0.3, 0.0, 0.0]);

        let lin = AnalyticSdf::ScaledLinear {
            direction: vec![1.0, 0.0, 0.0],
            offset: 0.2,
            scale: 1.5,
        };
        let p = sdf_descent(&lin, &[0.5, 0.1, -0.2], 4, 0.03).unwrap().unwrap();
        assert!((p[0] - 0.21875).abs() < 1e-15);
        assert_eq!(&p[1..], &[0.1, -0.2]);
        assert!(sdf_descent(&lin, &[0.5, 0.1, -0.2], 4, 0.02).unwrap().is_none());

        let c = AnalyticSdf::Constant { dim: 3, value: 1.0 };
        assert!(sdf_descent(&c, &[0.1, 0.1, 0.1], 4, 1e-3).unwrap().is_none());
        assert!(sdf_descent(&sphere, &[0.1; 3], 0, 1e-3).is_err());
    }

    #[test]
    fn exact_sdf_descent_is_closest_point_for_any_m() {
        let sphere = AnalyticSdf::sphere(&[0.1, -0.1, 0.0], 0.25);
        let plane = AnalyticSdf::plane(&[1.0, 2.0, -2.0], 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
            let c = [0.1, -0.1, 0.0];
            let r = distance(&p, &c);
            let want: Vec<f64> = (0..3).map(|a| c[a] + 0.25 * (p[a] - c[a]) / r).collect();
            for m in 1..=4 {
                let got = sdf_descent(&sphere, &p, m, 1e-9).unwrap().unwrap();
                for a in 0..3 {
                    assert!((got[a] - want[a]).abs() < 1e-14);
                }
                let on_plane = sdf_descent(&plane, &p, m, 1e-9).unwrap().unwrap();
                assert!(plane.values(&on_plane)[0].abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bank_on_sphere() {
        let sphere = AnalyticSdf::origin_sphere(3, 0.35);
        let cfg = SamplingConfig {
            bank_size: 20_000,
            ..Default::default()
        };
        let domain = BoundingBox::unit(3);
        let bank = refresh_bank(&sphere, &domain, &cfg, None, 0, &mut stream(0, 0, Purpose::Bank)).unwrap();
        assert_eq!(bank.len(), 20_000);
        let diag = 3f64.sqrt() / 127.0;
        let f = sphere.values(&bank.points);
        assert!(f.iter().all(|v| v.abs() < 2.0 * diag));
        let mean_r: f64 = bank.points.chunks_exact(3).map(|p| crate::geometry::norm(p)).sum::<f64>() / 20_000.0;
        assert!((mean_r - 0.35).abs() < 0.0035);

        let again = refresh_bank(&sphere, &domain, &cfg, None, 0, &mut stream(0, 0, Purpose::Bank)).unwrap();
        assert_eq!(bank, again);
    }

    #[test]
    fn bank_without_level_set_fails() {
        struct Offset;
        impl ScalarField for Offset {
            fn dim(&self) -> usize {
                3
            }
            fn values(&self, xs: &[f64]) -> Vec<f64> {
                xs.chunks_exact(3).map(|p| crate::geometry::norm(p) + 1.0).collect()
            }
            fn values_and_gradients(&self, _: &[f64]) -> (Vec<f64>, Vec<f64>) {
                unimplemented!()
            }
        }
        let cfg = SamplingConfig {
            train_mc_resolution: 16,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = refresh_bank(&Offset, &BoundingBox::unit(3), &cfg, None, 0, &mut rng);
        assert!(matches!(err, Err(Error::EmptyLevelSet)));
    }

    #[test]
    fn draws_from_fresh_bank_on_exact_sdf() {
        let sphere = AnalyticSdf::origin_sphere(3, 0.3);
        let cfg = SamplingConfig {
            bank_size: 2000,
            train_mc_resolution: 48,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bank = refresh_bank(&sphere, &BoundingBox::unit(3), &cfg, None, 0, &mut rng).unwrap();
        let draw = draw_surface_samples(&bank, &sphere, 500, &cfg, &mut rng).unwrap();
        assert_eq!(draw.acceptance_ratio(), 1.0);
        assert!(sphere.values(&draw.points).iter().all(|v| v.abs() <= cfg.accept_tol));
        let none = draw_surface_samples(&bank, &sphere, 0, &cfg, &mut rng).unwrap();
        assert!(none.points.is_empty());
    }

    #[test]
    fn accepted_mlp_samples_satisfy_tolerance() {
        let config = FieldConfig {
            hidden_layers: 3,
            hidden_width: 32,
            skip_layers: vec![],
            init_radius: 0.3,
            precision: Precision::F64,
            ..Default::default()
        };
        let net = Network::init_geometric(config, 5).unwrap();
        let cfg = SamplingConfig {
            bank_size: 3000,
            train_mc_resolution: 40,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bank = refresh_bank(&net, &BoundingBox::unit(3), &cfg, None, 0, &mut rng).unwrap();
        let draw = draw_surface_samples(&bank, &net, 1000, &cfg, &mut rng).unwrap();
        assert!(draw.accepted > 0);
        for v in net.values(&draw.points) {
            assert!(v.abs() <= cfg.accept_tol);
        }
    }

    fn grid_cloud() -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..6 {
                    pts.push([i as f64, j as f64, k as f64]);
                }
            }
        }
        PointCloud::from_points(&pts)
    }

    #[test]
    fn local_sigmas_match_brute_force() {
        let cloud = grid_cloud();
        let cfg = SamplingConfig::default();
        let spec = EikonalSampleSpec::from_cloud(&cloud, &cfg).unwrap();
        for (i, p) in cloud.iter().enumerate() {
            let mut d: Vec<f64> = cloud
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| distance(p, q))
                .collect();
            d.sort_by(f64::total_cmp);
            assert_eq!(spec.sigmas[i], 0.2 * d[49]);
        }
    }

    #[test]
    fn small_cloud_uses_last_neighbour() {
        let pts: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        let spec = EikonalSampleSpec::from_cloud(&PointCloud::from_points(&pts), &SamplingConfig::default()).unwrap();
        // point 0's farthest other point is 9 away
        assert!((spec.sigmas[0] - 0.2 * 9.0).abs() < 1e-15);
        assert!((spec.sigmas[5] - 0.2 * 5.0).abs() < 1e-15);
    }

    #[test]
    fn eikonal_sample_counts_and_bounds() {
        let cloud = grid_cloud();
        let cfg = SamplingConfig::default();
        let spec = EikonalSampleSpec::from_cloud(&cloud, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch = draw_cloud_batch(cloud.len(), 5000, &mut rng);
        assert_eq!(batch.len(), 5000);
        let domain = BoundingBox::new(vec![-1.0; 3], vec![6.0; 3]).unwrap();
        let xs = eikonal_sample_points(&cloud, &batch, &spec, &domain, &mut rng);
        assert_eq!(xs.len() / 3, 5625);
        assert!(xs[..625 * 3].chunks_exact(3).all(|p| domain.contains(p)));
    }

    #[test]
    fn batches_without_replacement_when_possible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut b = draw_cloud_batch(100, 100, &mut rng);
        b.sort_unstable();
        assert_eq!(b, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn config_validation() {
        assert!(SamplingConfig::default().validate().is_ok());
        let bad = SamplingConfig {
            descent_steps: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplingConfig {
            accept_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
