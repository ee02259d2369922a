use super::*;
use crate::field::{AnalyticSdf, FieldConfig, Network, ParametricField};
use crate::geometry::norm;
use crate::sampler::sdf_descent;
use crate::Precision;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn tiny_net(seed: u64) -> Network {
    let config = FieldConfig {
        input_dim: 3,
        hidden_layers: 2,
        hidden_width: 8,
        skip_layers: vec![],
        init_radius: 0.3,
        precision: Precision::F64,
        ..Default::default()
    };
    let mut net = Network::init_geometric(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let noisy: Vec<f64> = net
        .params_flat()
        .iter()
        .map(|p| p + 0.05 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    net.set_params_flat(&noisy).unwrap();
    net
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..3 * n).map(|_| rng.random_range(-0.5..0.5)).collect()
}

// central differences of a scalar function of θ
fn fd_gradient(net: &Network, value: impl Fn(&Network) -> f64) -> Vec<f64> {
    let theta = net.params_flat();
    let h = 1e-6;
    let mut probe = net.clone();
    (0..theta.len())
        .map(|k| {
            let mut t = theta.clone();
            t[k] += h;
            probe.set_params_flat(&t).unwrap();
            let up = value(&probe);
            t[k] -= 2.0 * h;
            probe.set_params_flat(&t).unwrap();
            let down = value(&probe);
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let diff: Vec<f64> = got.iter().zip(want).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(want).max(1e-8)
}

#[test]
fn eikonal_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let xs = random_points(&mut rng, 40);
    let sphere = AnalyticSdf::origin_sphere(3, 0.3);
    assert!(eikonal_loss(&sphere, &xs).unwrap().value < 1e-24);
    let lin = AnalyticSdf::ScaledLinear {
        direction: vec![1.0, 0.0, 0.0],
        offset: 0.0,
        scale: 2.0,
    };
    assert_eq!(eikonal_loss(&lin, &xs).unwrap().value, 1.0);
    let zero = AnalyticSdf::Constant { dim: 3, value: 0.0 };
    let t = eikonal_loss(&zero, &xs).unwrap();
    assert_eq!((t.value, t.skipped), (1.0, 40));
    assert!(eikonal_loss(&sphere, &[]).is_err());
}

#[test]
fn data_term_examples() {
    let sphere = AnalyticSdf::origin_sphere(3, 0.3);
    let on_04 = [0.4, 0.0, 0.0, 0.0, -0.4, 0.0, 0.0, 0.0, 0.4];
    assert!((data_term(&sphere, &on_04).unwrap().value - 0.1).abs() < 1e-15);
    let on_surface = [0.3, 0.0, 0.0, 0.0, 0.0, -0.3];
    assert_eq!(data_term(&sphere, &on_surface).unwrap().value, 0.0);
}

#[test]
fn data_term_is_true_distance_for_exact_sdfs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs = random_points(&mut rng, 50);
    let sphere = AnalyticSdf::origin_sphere(3, 0.3);
    let plane = AnalyticSdf::plane(&[0.0, 1.0, 0.0], 0.1);
    for p in xs.chunks_exact(3) {
        assert!((data_term(&sphere, p).unwrap().value - (norm(p) - 0.3).abs()).abs() < 1e-12);
        assert!((data_term(&plane, p).unwrap().value - (p[1] - 0.1).abs()).abs() < 1e-12);
        let c = AnalyticSdf::Circle { radius: 0.2 };
        let q = &p[..2];
        assert!((data_term(&c, q).unwrap().value - (norm(q) - 0.2).abs()).abs() < 1e-12);
    }
}

#[test]
fn gradients_match_finite_differences() {
    let cloud_pts = {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        random_points(&mut rng, 60)
    };
    let cloud = NearestNeighborIndex::new(3, cloud_pts).unwrap();
    for case in 0..20u64 {
        let net = tiny_net(case);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + case);
        let xs = random_points(&mut rng, 12);

        let t = data_term(&net, &xs).unwrap();
        let fd = fd_gradient(&net, |n| data_term(n, &xs).unwrap().value);
        assert!(rel_err(&t.gradient, &fd) < 1e-4, "data case {case}");

        let t = eikonal_loss(&net, &xs).unwrap();
        let fd = fd_gradient(&net, |n| eikonal_loss(n, &xs).unwrap().value);
        assert!(rel_err(&t.gradient, &fd) < 1e-4, "eikonal case {case}");

        let t = ssa_penalty(&net, &xs, 10.0).unwrap();
        let fd = fd_gradient(&net, |n| ssa_penalty(n, &xs, 10.0).unwrap().value);
        assert!(rel_err(&t.gradient, &fd) < 1e-4, "ssa case {case}");

        let t = neural_pull_loss(&net, &cloud, &xs).unwrap();
        let fd = fd_gradient(&net, |n| neural_pull_loss(n, &cloud, &xs).unwrap().value);
        assert!(rel_err(&t.gradient, &fd) < 1e-4, "neural-pull case {case}");
    }
}

#[test]
fn composite_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cloud_pts = random_points(&mut rng, 40);
    let cloud = NearestNeighborIndex::new(3, cloud_pts.clone()).unwrap();
    let batch = LossBatch {
        cloud: cloud_pts[..30].to_vec(),
        eikonal: random_points(&mut rng, 15),
        ssa: Some(random_points(&mut rng, 15)),
        surface: Some(random_points(&mut rng, 10)),
        local: Some(random_points(&mut rng, 15)),
    };
    let net = tiny_net(77);
    for variant in [LossVariant::Igr, LossVariant::Siren, LossVariant::NeuralPull] {
        let cfg = LossConfig {
            variant,
            ssa_weight: 0.5,
            ssa_sharpness: 20.0,
            ..Default::default()
        };
        let v = composite_loss(&net, &batch, &cloud, &cfg).unwrap();
        let fd = fd_gradient(&net, |n| composite_loss(n, &batch, &cloud, &cfg).unwrap().total);
        assert!(rel_err(&v.gradient, &fd) < 1e-4, "{variant}");
    }
    // DiffCD: everything but the surface-to-points term is a plain derivative
    let cfg = LossConfig::default();
    let v = composite_loss(&net, &batch, &cloud, &cfg).unwrap();
    let s2p = surface_to_points_term(&net, batch.surface.as_ref().unwrap(), &cloud).unwrap();
    let fd = fd_gradient(&net, |n| {
        0.5 * data_term(n, &batch.cloud).unwrap().value
            + cfg.eikonal_weight * eikonal_loss(n, &batch.eikonal).unwrap().value
    });
    let rest: Vec<f64> = v.gradient.iter().zip(&s2p.gradient).map(|(a, b)| a - 0.5 * b).collect();
    assert!(rel_err(&rest, &fd) < 1e-4);
}

#[test]
fn ssa_examples() {
    let domain = BoundingBox::unit(3);
    let zero = AnalyticSdf::Constant { dim: 3, value: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in [1, 17, 1000] {
        assert_eq!(ssa_loss(&zero, &domain, 100.0, k, &mut rng).unwrap().value, 50.0);
    }
    let area = 4.0 * std::f64::consts::PI * 0.35 * 0.35;
    let sphere = AnalyticSdf::origin_sphere(3, 0.35);
    let est = ssa_loss(&sphere, &domain, 100.0, 2_000_000, &mut rng).unwrap().value;
    assert!((est - area).abs() / area < 0.03, "{est}");
    let scaled = sphere.clone().scaled(0.5);
    let est = ssa_loss(&scaled, &domain, 100.0, 2_000_000, &mut rng).unwrap().value;
    assert!((est - 2.0 * area).abs() / (2.0 * area) < 0.03, "{est}");
    assert!(ssa_loss(&sphere, &domain, 100.0, 0, &mut rng).is_err());
}

#[test]
fn ssa_variance_grows_with_sharpness() {
    let domain = BoundingBox::unit(3);
    let sphere = AnalyticSdf::origin_sphere(3, 0.35);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut stdev = |alpha: f64| {
        let est: Vec<f64> = (0..50)
            .map(|_| ssa_loss(&sphere, &domain, alpha, 5000, &mut rng).unwrap().value)
            .collect();
        let m = est.iter().sum::<f64>() / 50.0;
        (est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / 49.0).sqrt()
    };
    let (lo, hi) = (stdev(100.0), stdev(1000.0));
    assert!(hi > lo, "{hi} vs {lo}");
}

#[test]
fn pull_examples() {
    let sphere = AnalyticSdf::origin_sphere(3, 0.3);
    let p = pull(&sphere, &[0.0, 0.6, 0.8]).unwrap();
    for (a, b) in p.iter().zip([0.0, 0.18, 0.24]) {
        assert!((a - b).abs() < 1e-15);
    }
    let plane = AnalyticSdf::plane(&[1.0, 0.0, 0.0], 0.2);
    assert_eq!(pull(&plane, &[0.5, 0.1, -0.3]).unwrap(), vec![0.2, 0.1, -0.3]);
    let steep = AnalyticSdf::ScaledLinear {
        direction: vec![1.0, 0.0, 0.0],
        offset: 0.2,
        scale: 2.0,
    };
    assert!((pull(&steep, &[0.5, 0.0, 0.0]).unwrap()[0] + 0.1).abs() < 1e-15);
    let flat = AnalyticSdf::Constant { dim: 3, value: 1.0 };
    assert!(pull(&flat, &[0.0; 3]).is_err());
}

#[test]
fn neural_pull_examples() {
    // single cloud point: f is the distance to it, every pull lands on it
    let p = [0.1, -0.2, 0.05];
    let point_sdf = AnalyticSdf::sphere(&p, 0.0);
    let index = NearestNeighborIndex::new(3, p.to_vec()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs = random_points(&mut rng, 20);
    assert!(neural_pull_loss(&point_sdf, &index, &xs).unwrap().value < 1e-15);

    // dense cloud on a sphere, samples near it
    let sphere = AnalyticSdf::origin_sphere(3, 0.3);
    let mut cloud = Vec::new();
    for i in 0..200 {
        for j in 0..100 {
            let (t, ph) = (std::f64::consts::PI * (i as f64 + 0.5) / 200.0, std::f64::consts::TAU * j as f64 / 100.0);
            cloud.extend([0.3 * t.sin() * ph.cos(), 0.3 * t.sin() * ph.sin(), 0.3 * t.cos()]);
        }
    }
    let index = NearestNeighborIndex::new(3, cloud.clone()).unwrap();
    let near: Vec<f64> = cloud
        .chunks_exact(3)
        .step_by(37)
        .flat_map(|c| c.iter().map(|v| v * 1.05).collect::<Vec<_>>())
        .collect();
    assert!(neural_pull_loss(&sphere, &index, &near).unwrap().value < 0.01);
}

// f(θ, x) = n·x − θ with a fixed unit n.
struct ShiftedPlane {
    normal: [f64; 3],
    theta: f64,
}

impl ScalarField for ShiftedPlane {
    fn dim(&self) -> usize {
        3
    }
    fn values(&self, xs: &[f64]) -> Vec<f64> {
        xs.chunks_exact(3).map(|x| dot(x, &self.normal) - self.theta).collect()
    }
    fn values_and_gradients(&self, xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g = xs.chunks_exact(3).flat_map(|_| self.normal).collect();
        (self.values(xs), g)
    }
    fn parametric(&self) -> Option<&dyn ParametricField> {
        Some(self)
    }
}

impl ParametricField for ShiftedPlane {
    fn num_params(&self) -> usize {
        1
    }
    fn params_flat(&self) -> Vec<f64> {
        vec![self.theta]
    }
    fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        self.theta = flat[0];
        Ok(())
    }
    fn param_vjp(&self, _: &[f64], seed_value: &[f64], _: Option<&[f64]>) -> Vec<f64> {
        vec![-seed_value.iter().sum::<f64>()]
    }
}

#[test]
fn surface_to_points_hand_cases() {
    let theta = 0.4;
    let field = ShiftedPlane {
        normal: [1.0, 0.0, 0.0],
        theta,
    };
    let origin = NearestNeighborIndex::new(3, vec![0.0; 3]).unwrap();
    let t = surface_to_points_term(&field, &[theta, 0.0, 0.0], &origin).unwrap();
    assert_eq!(t.value, theta);
    assert!((t.gradient[0] - 1.0).abs() < 1e-15);

    // residual orthogonal to the normal
    let beside = NearestNeighborIndex::new(3, vec![theta, 0.0, 0.0]).unwrap();
    let t = surface_to_points_term(&field, &[theta, 0.5, 0.0], &beside).unwrap();
    assert_eq!(t.gradient, vec![0.0]);

    // coincident sample and cloud point
    let t = surface_to_points_term(&field, &[theta, 0.0, 0.0], &beside).unwrap();
    assert_eq!((t.gradient[0], t.skipped), (0.0, 1));
    assert!(surface_to_points_term(&field, &[], &beside).is_err());
}

#[test]
fn level_set_identity_holds() {
    let net = tiny_net(3);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let x = random_points(&mut rng, 1);
        let g = crate::field::grad_x(&net, &x).unwrap();
        let f_theta = crate::field::grad_theta(&net, &x).unwrap();
        for &ft in &f_theta {
            let dx = level_set_point_derivative(ft, &g);
            assert!((dot(&g, &dx) + ft).abs() <= 1e-10 * ft.abs().max(1.0));
        }
    }
}

#[test]
fn descent_displacement_follows_level_set_derivative() {
    let net = tiny_net(11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let theta = net.params_flat();
    let dir: Vec<f64> = {
        let v: Vec<f64> = (0..theta.len()).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        v.into_iter().map(|c| c / n).collect()
    };
    let mut checked = 0;
    for _ in 0..20 {
        let seed = random_points(&mut rng, 1);
        let Some(x) = sdf_descent(&net, &seed, 30, 1e-13).unwrap() else {
            continue;
        };
        let g = crate::field::grad_x(&net, &x).unwrap();
        let f_theta: f64 = dot(&crate::field::grad_theta(&net, &x).unwrap(), &dir);
        let slope = |delta: f64| {
            let shifted: Vec<f64> = theta.iter().zip(&dir).map(|(t, v)| t + delta * v).collect();
            let mut moved = net.clone();
            moved.set_params_flat(&shifted).unwrap();
            let y = sdf_descent(&moved, &x, 30, 1e-13).unwrap().unwrap();
            let dx: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
            dot(&g, &dx) / delta
        };
        let (s3, s4) = (slope(1e-3), slope(1e-4));
        let richardson = (10.0 * s4 - s3) / 9.0;
        for s in [s3, s4, richardson] {
            assert!((s + f_theta).abs() <= 0.05 * f_theta.abs(), "{s} vs {}", -f_theta);
        }
        checked += 1;
    }
    assert!(checked >= 10);
}

#[test]
fn composite_reductions_and_bookkeeping() {
    let sphere = AnalyticSdf::origin_sphere(3, 0.3);
    let on_surface: Vec<f64> = (0..30)
        .flat_map(|i| {
            let t = i as f64 * 0.7;
            let p = [t.cos() * t.sin(), t.sin() * t.sin(), t.cos()];
            let n = norm(&p);
            p.map(|v| 0.3 * v / n)
        })
        .collect();
    let index = NearestNeighborIndex::new(3, on_surface.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let batch = LossBatch {
        cloud: on_surface.clone(),
        eikonal: random_points(&mut rng, 20),
        ssa: Some(random_points(&mut rng, 20)),
        surface: Some(on_surface.clone()),
        local: Some(random_points(&mut rng, 20)),
    };
    let v = composite_loss(&sphere, &batch, &index, &LossConfig::default()).unwrap();
    assert!(v.total.abs() < 1e-15);

    let net = tiny_net(21);
    let igr = LossConfig {
        variant: LossVariant::Igr,
        ..Default::default()
    };
    let siren = LossConfig {
        variant: LossVariant::Siren,
        ssa_weight: 0.0,
        ..Default::default()
    };
    let a = composite_loss(&net, &batch, &index, &igr).unwrap();
    let b = composite_loss(&net, &batch, &index, &siren).unwrap();
    assert_eq!(a.total, b.total);
    assert_eq!(a.gradient, b.gradient);

    for variant in [LossVariant::Igr, LossVariant::Siren, LossVariant::DiffCd, LossVariant::NeuralPull] {
        let cfg = LossConfig {
            variant,
            ..Default::default()
        };
        let v = composite_loss(&net, &batch, &index, &cfg).unwrap();
        assert!((v.total - v.recompute_total(&cfg)).abs() <= 1e-12 * v.total.abs());
    }
}

#[test]
fn composite_requires_variant_samples() {
    let sphere = AnalyticSdf::origin_sphere(3, 0.3);
    let index = NearestNeighborIndex::new(3, vec![0.3, 0.0, 0.0]).unwrap();
    let batch = LossBatch {
        cloud: vec![0.3, 0.0, 0.0],
        eikonal: vec![0.1, 0.1, 0.1],
        ..Default::default()
    };
    for variant in [LossVariant::Siren, LossVariant::DiffCd, LossVariant::NeuralPull] {
        let cfg = LossConfig {
            variant,
            ..Default::default()
        };
        assert!(matches!(
            composite_loss(&sphere, &batch, &index, &cfg),
            Err(Error::MissingSamples(_))
        ));
    }
}

#[test]
fn variant_names_round_trip() {
    for v in [LossVariant::Igr, LossVariant::Siren, LossVariant::NeuralPull, LossVariant::DiffCd] {
        assert_eq!(v.to_string().parse::<LossVariant>().unwrap(), v);
    }
    assert!("phase".parse::<LossVariant>().is_err());
}

proptest! {
    #[test]
    fn residual_scale_keeps_gradient_sign(
        n in prop::array::uniform3(-1.0f64..1.0),
        r in prop::array::uniform3(-1.0f64..1.0),
        s in 0.01f64..100.0,
        theta in -0.3f64..0.3,
    ) {
        prop_assume!(dot(&n, &n) > 0.01 && dot(&r, &r) > 1e-6);
        let l = dot(&n, &n).sqrt();
        let field = ShiftedPlane { normal: n.map(|v| v / l), theta };
        // a point on the plane
        let x: Vec<f64> = field.normal.iter().map(|v| v * theta).collect();
        let grad = |scale: f64| {
            let cloud: Vec<f64> = x.iter().zip(&r).map(|(a, b)| a - scale * b).collect();
            let index = NearestNeighborIndex::new(3, cloud).unwrap();
            surface_to_points_term(&field, &x, &index).unwrap().gradient[0]
        };
        let (a, b) = (grad(1.0), grad(s));
        prop_assert_eq!(a.signum() == b.signum(), true, "{} vs {}", a, b);
    }
}
