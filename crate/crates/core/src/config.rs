//! Run configuration: the full training tree plus input and output paths,
//! stored as a sectioned `key = value` file.
//!
//! ```text
//! [train]     iterations, base_lr, warmup_iters, beta1, beta2, adam_eps, seed,
//!             log_every, checkpoint_every, domain_half_width
//! [field]     input_dim, hidden_layers, hidden_width, skip_layers,
//!             activation_sharpness, init_radius, precision
//! [sampling]  k_mesh, bank_size, descent_steps, accept_tol, train_mc_resolution,
//!             local_knn_k, local_std_scale, n_global, batch_surface, batch_cloud, n_ssa
//! [loss]      variant, lambda, mu, alpha
//! [io]        input, out_dir, normalize, extract_resolution, metrics_samples
//! ```

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::field::FieldConfig;
use crate::losses::LossVariant;
use crate::real::Precision;
use crate::sampler::SamplingConfig;
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct IoConfig {
    /// Point cloud or mesh to fit; unset for commands that generate their own.
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Centre and rescale the input into Ω before fitting.
    pub normalize: bool,
    pub extract_resolution: usize,
    /// Samples per side for mesh metrics.
    pub metrics_samples: usize,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            input: None,
            out_dir: PathBuf::from("out"),
            normalize: true,
            extract_resolution: 512,
            metrics_samples: 30_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub io: IoConfig,
}

pub const SECTIONS: [&str; 5] = ["train", "field", "sampling", "loss", "io"];

/// Laptop-scale 3D settings: a 3×64 network, small batches and a coarse
/// training mesh, 5000 iterations.
pub fn desk_3d() -> RunConfig {
    let mut cfg = RunConfig::default();
    let t = &mut cfg.train;
    t.iterations = 5000;
    t.warmup_iters = 500;
    t.field = FieldConfig {
        input_dim: 3,
        hidden_layers: 3,
        hidden_width: 64,
        skip_layers: vec![],
        precision: Precision::F32,
        ..FieldConfig::default()
    };
    t.sampling = SamplingConfig {
        k_mesh: 250,
        bank_size: 20_000,
        train_mc_resolution: 64,
        n_global: 62,
        batch_surface: 500,
        batch_cloud: 500,
        n_ssa: 500,
        ..SamplingConfig::default()
    };
    cfg.io.extract_resolution = 128;
    cfg
}

/// Settings for the synthetic 2D clouds.
pub fn desk_2d() -> RunConfig {
    let mut cfg = RunConfig::default();
    let t = &mut cfg.train;
    t.iterations = 2000;
    t.warmup_iters = 100;
    t.log_every = 100;
    t.field = FieldConfig {
        input_dim: 2,
        hidden_layers: 4,
        hidden_width: 64,
        skip_layers: vec![],
        init_radius: 0.3,
        precision: Precision::F64,
        ..FieldConfig::default()
    };
    t.sampling = SamplingConfig {
        k_mesh: 100,
        bank_size: 5000,
        train_mc_resolution: 128,
        n_global: 100,
        batch_surface: 200,
        batch_cloud: 200,
        n_ssa: 200,
        ..SamplingConfig::default()
    };
    cfg.io.extract_resolution = 256;
    cfg.io.metrics_samples = 5000;
    cfg
}

/// Named base configurations: `default`, `desk-3d` and `desk-2d`.
pub fn preset(name: &str) -> Result<RunConfig> {
    match name {
        "default" => Ok(RunConfig::default()),
        "desk-3d" => Ok(desk_3d()),
        "desk-2d" => Ok(desk_2d()),
        other => Err(Error::config(format!(
            "unknown preset '{other}' (expected default, desk-3d or desk-2d)"
        ))),
    }
}

fn type_error(key: &str, expected: &str, got: &Value) -> Error {
    Error::config(format!("{key}: expected {expected}, got {got}"))
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(type_error(key, "a non-negative integer", v)),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(type_error(key, "a number", v)),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| type_error(key, "true or false", v))
}

fn as_str<'v>(key: &str, v: &'v Value) -> Result<&'v str> {
    v.as_str().ok_or_else(|| type_error(key, "a string", v))
}

fn as_seed(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        // seeds past i64::MAX do not fit a TOML integer
        Value::String(s) => s.parse().map_err(|_| type_error(key, "an unsigned integer", v)),
        _ => Err(type_error(key, "an unsigned integer", v)),
    }
}

fn float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:?}")
    }
}

fn string(s: &str) -> String {
    Value::String(s.to_owned()).to_string()
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.io.extract_resolution < 2 {
            return Err(Error::config("io.extract_resolution must be at least 2"));
        }
        if self.io.metrics_samples == 0 {
            return Err(Error::config("io.metrics_samples must be positive"));
        }
        Ok(())
    }

    /// Assign one key. `section.key` names must exist.
    pub fn set_value(&mut self, section: &str, key: &str, v: &Value) -> Result<()> {
        let name = format!("{section}.{key}");
        let k = name.as_str();
        let t = &mut self.train;
        match (section, key) {
            ("train", "iterations") => t.iterations = as_usize(k, v)?,
            ("train", "base_lr") => t.base_lr = as_f64(k, v)?,
            ("train", "warmup_iters") => t.warmup_iters = as_usize(k, v)?,
            ("train", "beta1") => t.beta1 = as_f64(k, v)?,
            ("train", "beta2") => t.beta2 = as_f64(k, v)?,
            ("train", "adam_eps") => t.adam_eps = as_f64(k, v)?,
            ("train", "seed") => t.seed = as_seed(k, v)?,
            ("train", "log_every") => t.log_every = as_usize(k, v)?,
            ("train", "checkpoint_every") => t.checkpoint_every = as_usize(k, v)?,
            ("train", "domain_half_width") => t.domain_half_width = as_f64(k, v)?,

            ("field", "input_dim") => t.field.input_dim = as_usize(k, v)?,
            ("field", "hidden_layers") => t.field.hidden_layers = as_usize(k, v)?,
            ("field", "hidden_width") => t.field.hidden_width = as_usize(k, v)?,
            ("field", "skip_layers") => {
                let items = v
                    .as_array()
                    .ok_or_else(|| type_error(k, "an array of integers", v))?;
                t.field.skip_layers = items.iter().map(|i| as_usize(k, i)).collect::<Result<_>>()?;
            }
            ("field", "activation_sharpness") => t.field.activation_sharpness = as_f64(k, v)?,
            ("field", "init_radius") => t.field.init_radius = as_f64(k, v)?,
            ("field", "precision") => {
                t.field.precision = Precision::from_str(as_str(k, v)?).map_err(|e| Error::config(format!("{k}: {e}")))?
            }

            ("sampling", "k_mesh") => t.sampling.k_mesh = as_usize(k, v)?,
            ("sampling", "bank_size") => t.sampling.bank_size = as_usize(k, v)?,
            ("sampling", "descent_steps") => t.sampling.descent_steps = as_usize(k, v)?,
            ("sampling", "accept_tol") => t.sampling.accept_tol = as_f64(k, v)?,
            ("sampling", "train_mc_resolution") => t.sampling.train_mc_resolution = as_usize(k, v)?,
            ("sampling", "local_knn_k") => t.sampling.local_knn_k = as_usize(k, v)?,
            ("sampling", "local_std_scale") => t.sampling.local_std_scale = as_f64(k, v)?,
            ("sampling", "n_global") => t.sampling.n_global = as_usize(k, v)?,
            ("sampling", "batch_surface") => t.sampling.batch_surface = as_usize(k, v)?,
            ("sampling", "batch_cloud") => t.sampling.batch_cloud = as_usize(k, v)?,
            ("sampling", "n_ssa") => t.sampling.n_ssa = as_usize(k, v)?,

            ("loss", "variant") => t.loss.variant = LossVariant::from_str(as_str(k, v)?)?,
            ("loss", "lambda") => t.loss.eikonal_weight = as_f64(k, v)?,
            ("loss", "mu") => t.loss.ssa_weight = as_f64(k, v)?,
            ("loss", "alpha") => t.loss.ssa_sharpness = as_f64(k, v)?,

            ("io", "input") => {
                let s = as_str(k, v)?;
                self.io.input = (!s.is_empty()).then(|| PathBuf::from(s));
            }
            ("io", "out_dir") => self.io.out_dir = PathBuf::from(as_str(k, v)?),
            ("io", "normalize") => self.io.normalize = as_bool(k, v)?,
            ("io", "extract_resolution") => self.io.extract_resolution = as_usize(k, v)?,
            ("io", "metrics_samples") => self.io.metrics_samples = as_usize(k, v)?,

            _ if !SECTIONS.contains(&section) => return Err(Error::config(format!("unknown section [{section}]"))),
            _ => return Err(Error::config(format!("unknown key '{k}'"))),
        }
        Ok(())
    }

    /// Apply a command-line override `section.key=value`. The value is read
    /// as a TOML value when it parses as one and as a bare string otherwise,
    /// so `loss.variant=diffcd` and `loss.variant="diffcd"` agree.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override '{assignment}' is not of the form section.key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::config(format!("override key '{}' lacks a section", path.trim())))?;
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_owned()));
        self.set_value(section, key, &value)
    }

    /// Overlay a config file's entries on `self`.
    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::format("config", e.message().to_owned()))?;
        for (section, body) in &table {
            let Value::Table(entries) = body else {
                return Err(Error::config(format!("top-level key '{section}' must live in a section")));
            };
            for (key, v) in entries {
                self.set_value(section, key, v)?;
            }
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        self.merge_str(&text)
    }

    /// Defaults overlaid with `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_str(text)?;
        Ok(cfg)
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for RunConfig {
    /// Every key, so the output alone reproduces the run.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.train;
        let mut s = String::new();
        let seed = if t.seed <= i64::MAX as u64 {
            t.seed.to_string()
        } else {
            string(&t.seed.to_string())
        };
        let _ = writeln!(s, "[train]");
        let _ = writeln!(s, "iterations = {}", t.iterations);
        let _ = writeln!(s, "base_lr = {}", float(t.base_lr));
        let _ = writeln!(s, "warmup_iters = {}", t.warmup_iters);
        let _ = writeln!(s, "beta1 = {}", float(t.beta1));
        let _ = writeln!(s, "beta2 = {}", float(t.beta2));
        let _ = writeln!(s, "adam_eps = {}", float(t.adam_eps));
        let _ = writeln!(s, "seed = {seed}");
        let _ = writeln!(s, "log_every = {}", t.log_every);
        let _ = writeln!(s, "checkpoint_every = {}", t.checkpoint_every);
        let _ = writeln!(s, "domain_half_width = {}", float(t.domain_half_width));

        let fc = &t.field;
        let skips: Vec<String> = fc.skip_layers.iter().map(|l| l.to_string()).collect();
        let _ = writeln!(s, "\n[field]");
        let _ = writeln!(s, "input_dim = {}", fc.input_dim);
        let _ = writeln!(s, "hidden_layers = {}", fc.hidden_layers);
        let _ = writeln!(s, "hidden_width = {}", fc.hidden_width);
        let _ = writeln!(s, "skip_layers = [{}]", skips.join(", "));
        let _ = writeln!(s, "activation_sharpness = {}", float(fc.activation_sharpness));
        let _ = writeln!(s, "init_radius = {}", float(fc.init_radius));
        let _ = writeln!(s, "precision = {}", string(&fc.precision.to_string()));

        let sc = &t.sampling;
        let _ = writeln!(s, "\n[sampling]");
        let _ = writeln!(s, "k_mesh = {}", sc.k_mesh);
        let _ = writeln!(s, "bank_size = {}", sc.bank_size);
        let _ = writeln!(s, "descent_steps = {}", sc.descent_steps);
        let _ = writeln!(s, "accept_tol = {}", float(sc.accept_tol));
        let _ = writeln!(s, "train_mc_resolution = {}", sc.train_mc_resolution);
        let _ = writeln!(s, "local_knn_k = {}", sc.local_knn_k);
        let _ = writeln!(s, "local_std_scale = {}", float(sc.local_std_scale));
        let _ = writeln!(s, "n_global = {}", sc.n_global);
        let _ = writeln!(s, "batch_surface = {}", sc.batch_surface);
        let _ = writeln!(s, "batch_cloud = {}", sc.batch_cloud);
        let _ = writeln!(s, "n_ssa = {}", sc.n_ssa);

        let lc = &t.loss;
        let _ = writeln!(s, "\n[loss]");
        let _ = writeln!(s, "variant = {}", string(&lc.variant.to_string()));
        let _ = writeln!(s, "lambda = {}", float(lc.eikonal_weight));
        let _ = writeln!(s, "mu = {}", float(lc.ssa_weight));
        let _ = writeln!(s, "alpha = {}", float(lc.ssa_sharpness));

        let io = &self.io;
        let input = io.input.as_ref().map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
        let _ = writeln!(s, "\n[io]");
        let _ = writeln!(s, "input = {}", string(&input));
        let _ = writeln!(s, "out_dir = {}", string(&io.out_dir.to_string_lossy()));
        let _ = writeln!(s, "normalize = {}", io.normalize);
        let _ = writeln!(s, "extract_resolution = {}", io.extract_resolution);
        let _ = writeln!(s, "metrics_samples = {}", io.metrics_samples);
        f.write_str(&s)
    }
}
