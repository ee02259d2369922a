use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use diffcd::analysis::{
    lambda_sweep, run_ssa_experiment, toy_circle_descent, toy_circle_minimizer, toy_circle_svg, toy_circle_sweep,
    write_toy_circle_csv, LambdaSweepConfig, SsaExperiment, ToyCircleSpec,
};
use diffcd::config::RunConfig;
use diffcd::demo::{run_demo, write_demo_csv, DemoShape};
use diffcd::field::{AnalyticSdf, ScalarField};
use diffcd::io::{self as dio, svg, Geometry};
use diffcd::mesher::{extract_level_set, LevelSet};
use diffcd::metrics::{oriented_mesh_samples, shape_metrics, write_metrics_csv, MetricsRow};
use diffcd::rng::{stream, Purpose};
use diffcd::sampler::{normalize_cloud, NormalizationTransform};
use diffcd::trainer::{load_state, save_state, Trainer, TrainingLog};
use diffcd::{BoundingBox, Error, PointCloud};
use rand::Rng;

use crate::Failure;

type Outcome = Result<(), Failure>;

fn echo(cfg: &RunConfig) {
    log::info!("effective config:\n{cfg}");
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, Error> {
    let dir = cfg.io.out_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::File {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}

fn normalization_text(t: &NormalizationTransform) -> String {
    let center: Vec<String> = t.center.iter().map(|c| format!("{c:?}")).collect();
    format!("center = [{}]\nscale = {:?}\n", center.join(", "), t.scale)
}

fn check(failures: &mut Vec<String>, ok: bool, what: String) {
    if ok {
        log::info!("pass: {what}");
    } else {
        log::error!("FAIL: {what}");
        failures.push(what);
    }
}

fn finish(failures: Vec<String>) -> Outcome {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failures.join("; ")))
    }
}

pub fn fit(cfg: &RunConfig, resume: Option<&Path>) -> Outcome {
    cfg.validate()?;
    echo(cfg);
    let input = cfg
        .io
        .input
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("no input cloud: pass a path or set io.input".into()))?;
    let raw = dio::read_cloud(input)?;
    log::info!("read {} points from {}", raw.len(), input.display());
    let (cloud, transform) = if cfg.io.normalize {
        normalize_cloud(&raw)?
    } else {
        (raw.clone(), NormalizationTransform::identity(raw.dim()))
    };

    let dir = out_dir(cfg)?;
    write_text(&dir.join("config.toml"), &cfg.to_string())?;
    write_text(&dir.join("normalization.toml"), &normalization_text(&transform))?;

    let t = &cfg.train;
    let mut trainer = match resume {
        Some(path) => {
            let state = load_state(path)?;
            if state.normalization != transform {
                return Err(Error::InvalidConfig("checkpoint normalization differs from the input's".into()).into());
            }
            log::info!("resuming at iteration {}", state.iteration);
            Trainer::resume(cloud, t.clone(), state)?
        }
        None => {
            let mut tr = Trainer::new(cloud, t.clone())?;
            tr.state_mut().normalization = transform;
            tr
        }
    };
    let log_name = match resume {
        Some(_) => format!("train_log_from_{}.csv", trainer.state().iteration),
        None => "train_log.csv".into(),
    };
    let mut log = TrainingLog::new(create(&dir.join(log_name))?)?;
    while !trainer.is_done() {
        let next = match t.checkpoint_every {
            0 => t.iterations,
            k => (trainer.state().iteration / k + 1) * k,
        };
        let result = trainer.run_until(next, Some(&mut log));
        log.flush()?;
        result?;
        if t.checkpoint_every > 0 && !trainer.is_done() {
            save_state(trainer.state(), &dir.join("checkpoint.state"))?;
        }
    }
    let path = dir.join("model.state");
    save_state(trainer.state(), &path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn extract(cfg: &RunConfig, checkpoint: &Path, output: Option<PathBuf>) -> Outcome {
    cfg.validate()?;
    echo(cfg);
    let state = load_state(checkpoint)?;
    let net = &state.network;
    let h = cfg.train.domain_half_width;
    let d = net.dim();
    let domain = BoundingBox::new(vec![-h; d], vec![h; d])?;
    let set = extract_level_set(net, &domain, cfg.io.extract_resolution)?;
    let t = &state.normalization;
    match set {
        LevelSet::Mesh(mut mesh) => {
            mesh.orient_by_gradient(net);
            let mesh = t.denormalize_mesh(&mesh);
            let path = output.unwrap_or_else(|| cfg.io.out_dir.join("mesh.obj"));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::File {
                    path: parent.to_path_buf(),
                    source: e,
                })?;
            }
            dio::write_mesh(&path, &mesh)?;
            log::info!(
                "wrote {} ({} vertices, {} faces, area {:.6})",
                path.display(),
                mesh.vertices().len(),
                mesh.faces().len(),
                mesh.area()
            );
        }
        LevelSet::Contour(c) => {
            let c = t.denormalize_contour(&c);
            let path = output.unwrap_or_else(|| cfg.io.out_dir.join("contour.csv"));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::File {
                    path: parent.to_path_buf(),
                    source: e,
                })?;
            }
            dio::write_contour_csv(&c, create(&path)?)?;
            log::info!("wrote {} ({} segments, length {:.6})", path.display(), c.segments().len(), c.length());
        }
    }
    Ok(())
}

fn metric_samples(g: Geometry, n: usize, rng: &mut impl Rng) -> Result<PointCloud, Error> {
    match g {
        Geometry::Cloud(c) => Ok(c),
        Geometry::Mesh(m) => oriented_mesh_samples(&m, n, rng),
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn metrics(cfg: &RunConfig, a: &Path, b: &Path, output: Option<PathBuf>) -> Outcome {
    cfg.validate()?;
    echo(cfg);
    let n = cfg.io.metrics_samples;
    let seed = cfg.train.seed;
    let sa = metric_samples(dio::read_geometry(a)?, n, &mut stream(seed, 0, Purpose::Metrics))?;
    let sb = metric_samples(dio::read_geometry(b)?, n, &mut stream(seed, 0, Purpose::Metrics))?;
    let row = MetricsRow {
        shape: stem(a),
        variant: stem(b),
        metrics: shape_metrics(&sa, &sb)?,
        n_samples: n,
        seed,
    };
    match output {
        Some(path) => write_metrics_csv(&[row], create(&path)?)?,
        None => write_metrics_csv(&[row], io::stdout().lock())?,
    }
    Ok(())
}

pub fn verify_ssa(
    cfg: &RunConfig,
    field: &str,
    alphas: Vec<f64>,
    samples: usize,
    repeats: usize,
    resolution: usize,
) -> Outcome {
    echo(cfg);
    let radius = 0.35;
    let (f, scale, sdf): (Box<dyn ScalarField>, f64, bool) = match field {
        "sphere" => (Box::new(AnalyticSdf::origin_sphere(3, radius)), 1.0, true),
        "scaled-sphere" => (Box::new(AnalyticSdf::origin_sphere(3, radius).scaled(0.5)), 0.5, true),
        path => (Box::new(load_state(Path::new(path))?.network), 1.0, false),
    };
    let h = cfg.train.domain_half_width;
    let d = f.dim();
    let exp = SsaExperiment {
        field: f.as_ref(),
        domain: BoundingBox::new(vec![-h; d], vec![h; d])?,
        alphas,
        samples,
        repeats,
        mesh_resolution: resolution,
        seed: cfg.train.seed,
    };
    let report = run_ssa_experiment(&exp)?;
    let dir = out_dir(cfg)?;
    report.write_csv(create(&dir.join("ssa.csv"))?)?;
    write_text(&dir.join("ssa.svg"), &report.to_svg())?;
    for r in &report.rows {
        log::info!(
            "alpha {:>8} mean {:.6} stdev {:.6} oracle {:.6} area {:.6}",
            r.alpha,
            r.mean,
            r.stdev,
            r.mesh_oracle,
            r.area
        );
    }
    log::info!("median level-set gradient norm {:.4}", report.median_grad_norm);

    let mut failures = Vec::new();
    let at = |a: f64| report.rows.iter().find(|r| r.alpha == a);
    if sdf {
        let want = 4.0 * PI * radius * radius / scale;
        if let Some(r) = at(100.0) {
            let rel = (r.mean - want).abs() / want;
            check(&mut failures, rel < 0.03, format!("alpha 100 estimate within 3% of {want:.6} (rel {rel:.4})"));
            let rel = (r.mean - r.mesh_oracle).abs() / r.mesh_oracle;
            check(&mut failures, rel < 0.03, format!("alpha 100 estimate within 3% of the mesh oracle (rel {rel:.4})"));
        }
        if let (Some(lo), Some(hi)) = (at(100.0), at(1000.0)) {
            check(
                &mut failures,
                hi.stdev > lo.stdev,
                format!("stdev at alpha 1000 ({:.5}) exceeds alpha 100 ({:.5})", hi.stdev, lo.stdev),
            );
        }
    } else {
        // estimates follow ∫1/‖∇f‖, so they sit above the area when ‖∇f‖ < 1
        let g = report.median_grad_norm;
        for r in &report.rows {
            let ok = if g < 1.0 { r.mean > r.area } else { r.mean < r.area };
            check(
                &mut failures,
                ok,
                format!("alpha {}: estimate {:.5} vs area {:.5} ordered as median |g| {g:.3}", r.alpha, r.mean, r.area),
            );
        }
    }
    finish(failures)
}

pub fn verify_toy_circle(cfg: &RunConfig, alpha: f64, steps: usize) -> Outcome {
    echo(cfg);
    let lr = 1e-2;
    let dir = out_dir(cfg)?;
    let weights: Vec<f64> = (0..=20).map(|i| 0.01 * i as f64).collect();
    let mut failures = Vec::new();
    for p in [1, 2] {
        let rows = toy_circle_sweep(0.5, p, &weights, alpha, steps, lr)?;
        write_toy_circle_csv(&rows, create(&dir.join(format!("toy_circle_p{p}.csv")))?)?;
        write_text(&dir.join(format!("toy_circle_p{p}.svg")), &toy_circle_svg(&rows))?;
        if p == 2 {
            let worst = rows.iter().map(|r| (r.descent - r.closed_form).abs()).fold(0.0, f64::max);
            check(&mut failures, worst < 1e-3, format!("p=2 sweep matches the closed form (max error {worst:.2e})"));
        }
    }

    let mut rng = stream(cfg.train.seed, 0, Purpose::Experiment);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let spec = ToyCircleSpec {
            radius: rng.random_range(0.2..1.0),
            weight: rng.random_range(0.0..0.4),
            exponent: 2,
        };
        let got = toy_circle_descent(&spec, alpha, spec.radius, steps, lr)?.theta;
        worst = worst.max((got - toy_circle_minimizer(&spec)?).abs());
    }
    check(&mut failures, worst < 1e-3, format!("20 random p=2 specs within 1e-3 (max error {worst:.2e})"));

    let below = ToyCircleSpec {
        radius: 0.5,
        weight: 0.1,
        exponent: 1,
    };
    let above = ToyCircleSpec { weight: 0.2, ..below };
    let t_below = toy_circle_descent(&below, alpha, 0.25, steps, lr)?.theta;
    let t_above = toy_circle_descent(&above, alpha, 0.5, steps, lr)?.theta;
    check(&mut failures, (t_below - 0.5).abs() < 1e-3, format!("p=1, mu=0.1 keeps theta = r ({t_below:.6})"));
    check(&mut failures, t_above < 1e-2, format!("p=1, mu=0.2 collapses ({t_above:.2e})"));
    finish(failures)
}

pub fn verify_lambda_sweep(cfg: &RunConfig, lambdas: Vec<f64>, resolution: usize, samples: usize) -> Outcome {
    cfg.validate()?;
    echo(cfg);
    let cloud = match &cfg.io.input {
        Some(p) => {
            let raw = dio::read_cloud(p)?;
            if cfg.io.normalize {
                normalize_cloud(&raw)?.0
            } else {
                raw
            }
        }
        None => diffcd::demo::generate(DemoShape::NoisyCircle, cfg.train.seed),
    };
    let sweep = LambdaSweepConfig {
        lambdas,
        eval_resolution: resolution,
        eval_samples: samples,
        ..Default::default()
    };
    let report = lambda_sweep(&cloud, &cfg.train, &sweep)?;
    let dir = out_dir(cfg)?;
    report.write_csv(create(&dir.join("lambda_sweep.csv"))?)?;
    report.write_histogram_csv(create(&dir.join("lambda_histogram.csv"))?)?;

    let mut failures = Vec::new();
    for r in &report.rows {
        log::info!(
            "lambda {:<5} measure {:.5} components {} cd {:.5} median |g| {:.4}{}",
            r.lambda,
            r.measure,
            r.components,
            r.cd,
            r.grad_median,
            if r.degenerate_risk { " (degenerate risk)" } else { "" }
        );
    }
    let mut rows: Vec<_> = report.rows.iter().collect();
    rows.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    for w in rows.windows(2) {
        check(
            &mut failures,
            w[1].measure <= w[0].measure,
            format!(
                "level-set measure non-increasing from lambda {} ({:.5}) to {} ({:.5})",
                w[0].lambda, w[0].measure, w[1].lambda, w[1].measure
            ),
        );
    }
    finish(failures)
}

pub fn demo2d(cfg: &RunConfig, shape: &str) -> Outcome {
    let shape: DemoShape = shape.parse()?;
    cfg.validate()?;
    echo(cfg);
    let dir = out_dir(cfg)?;
    let stem = format!("{shape}_{}", cfg.train.loss.variant);
    write_text(&dir.join(format!("{stem}_config.toml")), &cfg.to_string())?;
    let mut log = TrainingLog::new(create(&dir.join(format!("{stem}_train_log.csv")))?)?;
    let result = run_demo(shape, cfg, Some(&mut log));
    log.flush()?;
    let o = result?;

    dio::write_cloud(&dir.join(format!("{shape}_cloud.xyz")), &o.cloud)?;
    dio::write_contour_csv(&o.contour, create(&dir.join(format!("{stem}_contour.csv")))?)?;
    write_text(
        &dir.join(format!("{stem}_contour.svg")),
        &svg::contour_svg(&o.contour, Some(&o.cloud), &cfg.train.domain()),
    )?;
    write_demo_csv(&[&o], create(&dir.join(format!("{stem}_metrics.csv")))?)?;
    save_state(&o.state, &dir.join(format!("{stem}.state")))?;
    log::info!(
        "{shape} {}: cd to reference {:.6}, cd to cloud {:.6}, {} components, {} spurious, length {:.4}",
        o.variant,
        o.cd_reference,
        o.cd_cloud,
        o.components,
        o.spurious,
        o.length
    );
    Ok(())
}
