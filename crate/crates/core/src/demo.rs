//! Synthetic 2D clouds for the demos, generated directly inside
//! `[−0.5, 0.5]²`, with their reference boundaries.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{distance, PointCloud};
use crate::losses::LossVariant;
use crate::mesher::{marching_squares, sample_contour_uniform, Contour2D};
use crate::metrics::{chamfer, NearestNeighborIndex};
use crate::rng::{stream, Purpose};
use crate::trainer::{StepRecord, TrainState, Trainer, TrainingLog};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DemoShape {
    /// Outline of the union of two crossing rectangles.
    Cross,
    /// 16 points on the boundary of a square of side 0.6.
    SparseBox,
    /// 500 points near a circle of radius 0.3.
    NoisyCircle,
}

impl DemoShape {
    pub const ALL: [DemoShape; 3] = [DemoShape::Cross, DemoShape::SparseBox, DemoShape::NoisyCircle];
}

impl fmt::Display for DemoShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemoShape::Cross => "cross",
            DemoShape::SparseBox => "sparse-box",
            DemoShape::NoisyCircle => "noisy-circle",
        })
    }
}

impl FromStr for DemoShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross" => Ok(DemoShape::Cross),
            "sparse-box" => Ok(DemoShape::SparseBox),
            "noisy-circle" => Ok(DemoShape::NoisyCircle),
            other => Err(Error::config(format!(
                "unknown demo shape '{other}' (expected cross, sparse-box or noisy-circle)"
            ))),
        }
    }
}

pub const CROSS_HALF_LENGTH: f64 = 0.35;
pub const CROSS_HALF_WIDTH: f64 = 0.1;
pub const BOX_HALF_SIDE: f64 = 0.3;
pub const CIRCLE_RADIUS: f64 = 0.3;
pub const CIRCLE_NOISE: f64 = 0.02;

/// Closed reference boundary, counter-clockwise, first vertex not repeated.
pub fn reference_polygon(shape: DemoShape) -> Vec<[f64; 2]> {
    match shape {
        DemoShape::Cross => {
            let (a, b) = (CROSS_HALF_LENGTH, CROSS_HALF_WIDTH);
            vec![
                [a, -b],
                [a, b],
                [b, b],
                [b, a],
                [-b, a],
                [-b, b],
                [-a, b],
                [-a, -b],
                [-b, -b],
                [-b, -a],
                [b, -a],
                [b, -b],
            ]
        }
        DemoShape::SparseBox => {
            let s = BOX_HALF_SIDE;
            vec![[-s, -s], [s, -s], [s, s], [-s, s]]
        }
        DemoShape::NoisyCircle => (0..1024)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 1024.0;
                [CIRCLE_RADIUS * t.cos(), CIRCLE_RADIUS * t.sin()]
            })
            .collect(),
    }
}

/// `n` points equally spaced by arc length along a closed polygon, starting
/// at its first vertex.
pub fn sample_polygon(poly: &[[f64; 2]], n: usize) -> PointCloud {
    let k = poly.len();
    let lens: Vec<f64> = (0..k).map(|i| distance(&poly[i], &poly[(i + 1) % k])).collect();
    let total: f64 = lens.iter().sum();
    let mut pts = Vec::with_capacity(n);
    let (mut edge, mut start) = (0, 0.0);
    for j in 0..n {
        let s = total * j as f64 / n as f64;
        while edge + 1 < k && s > start + lens[edge] {
            start += lens[edge];
            edge += 1;
        }
        let t = ((s - start) / lens[edge]).clamp(0.0, 1.0);
        let (a, b) = (poly[edge], poly[(edge + 1) % k]);
        pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    PointCloud::from_points(&pts)
}

/// The demo's input cloud. Only the noisy circle consumes randomness.
pub fn generate(shape: DemoShape, seed: u64) -> PointCloud {
    match shape {
        DemoShape::Cross => sample_polygon(&reference_polygon(shape), 200),
        DemoShape::SparseBox => sample_polygon(&reference_polygon(shape), 16),
        DemoShape::NoisyCircle => {
            let mut rng = stream(seed, 0, Purpose::Generator);
            let noise = Normal::new(0.0, CIRCLE_NOISE).expect("positive sigma");
            let pts: Vec<[f64; 2]> = (0..500)
                .map(|_| {
                    let t = rng.random_range(0.0..2.0 * PI);
                    [
                        CIRCLE_RADIUS * t.cos() + noise.sample(&mut rng),
                        CIRCLE_RADIUS * t.sin() + noise.sample(&mut rng),
                    ]
                })
                .collect();
            PointCloud::from_points(&pts)
        }
    }
}

/// Dense samples of the reference boundary for metrics.
pub fn reference_samples(shape: DemoShape, n: usize) -> PointCloud {
    sample_polygon(&reference_polygon(shape), n)
}

/// Connected components of `contour` whose vertices all lie farther than
/// `threshold` from every cloud point. Vertex distance stands in for
/// segment distance; segments are a grid cell long at most.
pub fn spurious_components(contour: &Contour2D, cloud: &PointCloud, threshold: f64) -> Result<Vec<Vec<usize>>> {
    let index = NearestNeighborIndex::from_cloud(cloud)?;
    Ok(contour
        .components()
        .into_iter()
        .filter(|comp| {
            comp.iter()
                .all(|&v| index.nearest(&contour.vertices()[v]).1 > threshold)
        })
        .collect())
}

/// Contour components farther than this from every cloud point count as
/// spurious.
pub const SPURIOUS_DISTANCE: f64 = 0.05;

/// A fitted demo and its evaluation.
pub struct DemoOutcome {
    pub shape: DemoShape,
    pub variant: LossVariant,
    pub cloud: PointCloud,
    pub state: TrainState,
    pub records: Vec<StepRecord>,
    pub contour: Contour2D,
    /// Symmetric Chamfer distance from contour samples to the reference boundary.
    pub cd_reference: f64,
    /// Symmetric Chamfer distance from contour samples to the input cloud.
    pub cd_cloud: f64,
    pub components: usize,
    pub spurious: usize,
    pub length: f64,
}

/// Generate the cloud, fit it with `cfg`, extract the contour at
/// `io.extract_resolution` and evaluate it with `io.metrics_samples` samples.
pub fn run_demo<W: Write>(shape: DemoShape, cfg: &RunConfig, log: Option<&mut TrainingLog<W>>) -> Result<DemoOutcome> {
    cfg.validate()?;
    let t = &cfg.train;
    if t.field.input_dim != 2 {
        return Err(Error::config("2D demos need field.input_dim = 2"));
    }
    let cloud = generate(shape, t.seed);
    let mut trainer = Trainer::new(cloud.clone(), t.clone())?;
    let records = trainer.run_until(t.iterations, log)?;
    let state = trainer.into_state();

    let contour = marching_squares(&state.network, &t.domain(), cfg.io.extract_resolution)?;
    if contour.is_empty() {
        return Err(Error::EmptyLevelSet);
    }
    let n = cfg.io.metrics_samples;
    let samples = PointCloud::new(2, sample_contour_uniform(&contour, n, &mut stream(t.seed, 0, Purpose::Metrics))?)?;
    let cd_reference = chamfer(&samples, &reference_samples(shape, n))?;
    let cd_cloud = chamfer(&samples, &cloud)?;
    let spurious = spurious_components(&contour, &cloud, SPURIOUS_DISTANCE)?.len();
    Ok(DemoOutcome {
        shape,
        variant: t.loss.variant,
        components: contour.components().len(),
        length: contour.length(),
        cloud,
        state,
        records,
        contour,
        cd_reference,
        cd_cloud,
        spurious,
    })
}

pub const DEMO_HEADER: [&str; 7] = ["shape", "variant", "cd_reference", "cd_cloud", "components", "spurious", "length"];

pub fn write_demo_csv<W: Write>(outcomes: &[&DemoOutcome], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DEMO_HEADER)?;
    for o in outcomes {
        w.write_record([
            o.shape.to_string(),
            o.variant.to_string(),
            o.cd_reference.to_string(),
            o.cd_cloud.to_string(),
            o.components.to_string(),
            o.spurious.to_string(),
            o.length.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_parse_and_print() {
        for s in DemoShape::ALL {
            assert_eq!(s.to_string().parse::<DemoShape>().unwrap(), s);
        }
        assert!("blob".parse::<DemoShape>().is_err());
    }

    #[test]
    fn generator_sizes_and_bounds() {
        for (s, n) in [(DemoShape::Cross, 200), (DemoShape::SparseBox, 16), (DemoShape::NoisyCircle, 500)] {
            let c = generate(s, 3);
            assert_eq!(c.len(), n);
            assert!(c.iter().all(|p| p.iter().all(|v| v.abs() < 0.5)));
        }
    }

    #[test]
    fn sparse_box_hits_corners_with_even_spacing() {
        let c = generate(DemoShape::SparseBox, 0);
        for corner in reference_polygon(DemoShape::SparseBox) {
            assert!(c.iter().any(|p| distance(p, &corner) < 1e-12));
        }
        for i in 0..16 {
            let d = distance(c.point(i), c.point((i + 1) % 16));
            assert!((d - 0.15).abs() < 1e-12, "{d}");
        }
    }

    #[test]
    fn cross_points_lie_on_outline() {
        let poly = reference_polygon(DemoShape::Cross);
        let perimeter: f64 = (0..poly.len()).map(|i| distance(&poly[i], &poly[(i + 1) % poly.len()])).sum();
        // 4 arms: 2 sides of 0.25 and an end of 0.2 each
        assert!((perimeter - 2.8).abs() < 1e-12);
        let c = generate(DemoShape::Cross, 0);
        let (a, b) = (CROSS_HALF_LENGTH, CROSS_HALF_WIDTH);
        for p in c.iter() {
            let (x, y) = (p[0].abs(), p[1].abs());
            let on = ((x - a).abs() < 1e-12 && y <= b + 1e-12)
                || ((y - a).abs() < 1e-12 && x <= b + 1e-12)
                || ((x - b).abs() < 1e-12 && y >= b - 1e-12)
                || ((y - b).abs() < 1e-12 && x >= b - 1e-12);
            assert!(on, "{p:?}");
        }
    }

    #[test]
    fn noisy_circle_statistics() {
        let c = generate(DemoShape::NoisyCircle, 1);
        let radii: Vec<f64> = c.iter().map(|p| p[0].hypot(p[1])).collect();
        let mean = radii.iter().sum::<f64>() / 500.0;
        // radial spread of 2D isotropic noise is σ; mean radius is biased by about σ²/2r
        assert!((mean - CIRCLE_RADIUS).abs() < 0.005, "{mean}");
        let sd = (radii.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 499.0).sqrt();
        assert!((sd - CIRCLE_NOISE).abs() < 0.004, "{sd}");
        assert_eq!(generate(DemoShape::NoisyCircle, 1), c);
        assert_ne!(generate(DemoShape::NoisyCircle, 2), c);
    }

    #[test]
    fn spurious_component_detection() {
        let cloud = PointCloud::from_points(&[[0.0, 0.0], [0.1, 0.0]]);
        let near = [[0.0, 0.01], [0.1, 0.01]];
        let far = [[0.4, 0.4], [0.45, 0.4]];
        let c = Contour2D::new(vec![near[0], near[1], far[0], far[1]], vec![[0, 1], [2, 3]]).unwrap();
        let s = spurious_components(&c, &cloud, 0.05).unwrap();
        assert_eq!(s, vec![vec![2, 3]]);
    }

    #[test]
    fn short_demo_run() {
        let mut cfg = crate::config::desk_2d();
        cfg.train.iterations = 20;
        cfg.train.warmup_iters = 5;
        cfg.train.loss.variant = LossVariant::Igr;
        cfg.io.extract_resolution = 64;
        cfg.io.metrics_samples = 500;
        let o = run_demo::<std::io::Sink>(DemoShape::NoisyCircle, &cfg, None).unwrap();
        assert_eq!(o.state.iteration, 20);
        assert!(o.cd_reference.is_finite() && o.cd_cloud > 0.0);
        assert!(o.components >= 1 && o.spurious <= o.components);
        let mut buf = Vec::new();
        write_demo_csv(&[&o], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);

        cfg.train.field.input_dim = 3;
        assert!(run_demo::<std::io::Sink>(DemoShape::Cross, &cfg, None).is_err());
    }
}
