//! The optimisation loop: Adam with linear warm-up and cosine annealing,
//! per-iteration batch assembly, surface-bank refresh, logging and
//! resumable checkpoints.

mod state;

pub use state::{load_state, read_state, save_state, write_state, TRAINER_MAGIC};

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::field::{FieldConfig, Network, ParametricField};
use crate::geometry::{BoundingBox, PointCloud};
use crate::losses::{composite_loss, LossBatch, LossComponents, LossConfig, LossVariant};
use crate::metrics::NearestNeighborIndex;
use crate::rng::{stream, Purpose};
use crate::sampler::{
    draw_cloud_batch, draw_surface_samples, eikonal_sample_points, gather, refresh_bank, EikonalSampleSpec,
    NormalizationTransform, SamplingConfig, SurfaceSampleBank,
};

/// Totals kept in [`TrainState::history`].
pub const HISTORY_LEN: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub base_lr: f64,
    pub warmup_iters: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Log every this many iterations; the final iteration is always logged.
    pub log_every: usize,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    /// Ω = [−h, h]^d.
    pub domain_half_width: f64,
    pub field: FieldConfig,
    pub sampling: SamplingConfig,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 40_000,
            base_lr: 1e-3,
            warmup_iters: 1000,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            log_every: 100,
            checkpoint_every: 0,
            domain_half_width: 0.5,
            field: FieldConfig::default(),
            sampling: SamplingConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_iters > self.iterations {
            return Err(Error::config("train.warmup_iters exceeds train.iterations"));
        }
        if !(self.base_lr > 0.0) {
            return Err(Error::config("train.base_lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("train.adam_eps must be positive"));
        }
        if !(self.domain_half_width > 0.0) {
            return Err(Error::config("train.domain_half_width must be positive"));
        }
        if self.log_every == 0 {
            return Err(Error::config("train.log_every must be at least 1"));
        }
        self.field.validate()?;
        self.sampling.validate()?;
        self.loss.validate()
    }

    pub fn domain(&self) -> BoundingBox {
        let d = self.field.input_dim;
        let h = self.domain_half_width;
        BoundingBox::new(vec![-h; d], vec![h; d]).expect("positive half width")
    }
}

/// Linear warm-up from `base_lr/warmup`, then cosine annealing to 0.
pub fn lr_at(iter: usize, cfg: &TrainConfig) -> f64 {
    if iter < cfg.warmup_iters {
        return cfg.base_lr * (iter + 1) as f64 / cfg.warmup_iters as f64;
    }
    let span = cfg.iterations.saturating_sub(cfg.warmup_iters);
    if span == 0 {
        return cfg.base_lr;
    }
    let t = (iter - cfg.warmup_iters).min(span) as f64 / span as f64;
    cfg.base_lr * 0.5 * (1.0 + (PI * t).cos())
}

/// Adam moments and step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Completed updates.
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut [f64],
    state: &mut AdamState,
    gradient: &[f64],
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if gradient.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: gradient.len(),
        });
    }
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            component: "gradient",
            iteration: state.t as usize,
        });
    }
    state.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powf(state.t as f64);
    let c2 = 1.0 - b2.powf(state.t as f64);
    for i in 0..params.len() {
        let g = gradient[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    Ok(())
}

/// Everything needed to continue training bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub network: Network,
    pub adam: AdamState,
    /// Next iteration to run.
    pub iteration: usize,
    pub seed: u64,
    /// DiffCD only.
    pub bank: Option<SurfaceSampleBank>,
    /// Maps original coordinates into the training frame.
    pub normalization: NormalizationTransform,
    /// Most recent totals, oldest first.
    pub history: VecDeque<f64>,
}

/// What one iteration did.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub iteration: usize,
    pub lr: f64,
    pub total: f64,
    pub components: LossComponents,
    /// Surface-sample acceptance (DiffCD).
    pub accept_ratio: Option<f64>,
}

pub const LOG_HEADER: [&str; 8] = [
    "iteration",
    "lr",
    "total",
    "data",
    "eikonal",
    "ssa",
    "surface_to_points",
    "accept_ratio",
];

/// CSV training log; absent components are left empty.
pub struct TrainingLog<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> TrainingLog<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(LOG_HEADER)?;
        Ok(Self { writer })
    }

    pub fn record(&mut self, r: &StepRecord) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let c = &r.components;
        self.writer.write_record([
            r.iteration.to_string(),
            r.lr.to_string(),
            r.total.to_string(),
            opt(c.data),
            opt(c.eikonal),
            opt(c.ssa),
            opt(c.surface_to_points),
            opt(r.accept_ratio),
        ])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

/// Step-wise trainer over a normalized cloud.
pub struct Trainer {
    cfg: TrainConfig,
    cloud: PointCloud,
    index: NearestNeighborIndex,
    eikonal_spec: EikonalSampleSpec,
    domain: BoundingBox,
    state: TrainState,
}

impl Trainer {
    /// Fresh state with a geometrically initialised network.
    pub fn new(cloud: PointCloud, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let network = Network::init_geometric(cfg.field.clone(), cfg.seed)?;
        let state = TrainState {
            adam: AdamState::new(network.num_params()),
            network,
            iteration: 0,
            seed: cfg.seed,
            bank: None,
            normalization: NormalizationTransform::identity(cfg.field.input_dim),
            history: VecDeque::new(),
        };
        Self::resume(cloud, cfg, state)
    }

    /// Continue from a saved state; `cfg` must describe the same run.
    pub fn resume(cloud: PointCloud, cfg: TrainConfig, state: TrainState) -> Result<Self> {
        cfg.validate()?;
        if cloud.dim() != cfg.field.input_dim {
            return Err(Error::DimensionMismatch {
                expected: cfg.field.input_dim,
                got: cloud.dim(),
            });
        }
        if state.network.config() != &cfg.field {
            return Err(Error::config("checkpoint architecture differs from the field config"));
        }
        if state.seed != cfg.seed {
            return Err(Error::config(format!(
                "checkpoint seed {} differs from configured seed {}",
                state.seed, cfg.seed
            )));
        }
        let index = NearestNeighborIndex::from_cloud(&cloud)?;
        let eikonal_spec = EikonalSampleSpec::from_cloud(&cloud, &cfg.sampling)?;
        Ok(Self {
            domain: cfg.domain(),
            cfg,
            cloud,
            index,
            eikonal_spec,
            state,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut TrainState {
        &mut self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.state.iteration >= self.cfg.iterations
    }

    fn ensure_bank(&mut self, k: usize) -> Result<()> {
        let due = k % self.cfg.sampling.k_mesh == 0 || self.state.bank.is_none();
        if !due {
            return Ok(());
        }
        let mut rng = stream(self.state.seed, k as u64, Purpose::Bank);
        let res = self.cfg.sampling.train_mc_resolution;
        let net = &self.state.network;
        let bank = match refresh_bank(net, &self.domain, &self.cfg.sampling, None, k, &mut rng) {
            Err(Error::EmptyLevelSet) => {
                log::warn!("empty level set at iteration {k}, retrying at resolution {}", 2 * res);
                let mut rng = stream(self.state.seed, k as u64, Purpose::Bank);
                refresh_bank(net, &self.domain, &self.cfg.sampling, Some(2 * res), k, &mut rng).map_err(|e| {
                    log::error!("bank refresh failed twice at iteration {k}");
                    e
                })?
            }
            other => other?,
        };
        self.state.bank = Some(bank);
        Ok(())
    }

    /// Run one iteration.
    pub fn step(&mut self) -> Result<StepRecord> {
        let k = self.state.iteration;
        let seed = self.state.seed;
        let s = &self.cfg.sampling;
        let d = self.cloud.dim();
        let variant = self.cfg.loss.variant;

        let batch_idx = draw_cloud_batch(
            self.cloud.len(),
            s.batch_cloud,
            &mut stream(seed, k as u64, Purpose::CloudBatch),
        );
        let eik = eikonal_sample_points(
            &self.cloud,
            &batch_idx,
            &self.eikonal_spec,
            &self.domain,
            &mut stream(seed, k as u64, Purpose::Eikonal),
        );
        let mut batch = LossBatch {
            cloud: gather(&self.cloud, &batch_idx),
            ..Default::default()
        };
        let mut accept_ratio = None;
        match variant {
            LossVariant::NeuralPull => {
                batch.local = Some(eik[self.eikonal_spec.n_global * d..].to_vec());
            }
            LossVariant::Siren => {
                let mut xs = Vec::with_capacity(s.n_ssa * d);
                self.domain
                    .sample_uniform(&mut stream(seed, k as u64, Purpose::Ssa), s.n_ssa, &mut xs);
                batch.ssa = Some(xs);
                batch.eikonal = eik;
            }
            LossVariant::DiffCd => {
                self.ensure_bank(k)?;
                let s = &self.cfg.sampling;
                let bank = self.state.bank.as_ref().expect("bank ensured");
                let draw = draw_surface_samples(
                    bank,
                    &self.state.network,
                    s.batch_surface,
                    s,
                    &mut stream(seed, k as u64, Purpose::SurfaceDraw),
                )?;
                accept_ratio = Some(draw.acceptance_ratio());
                batch.surface = Some(draw.points);
                batch.eikonal = eik;
            }
            LossVariant::Igr => batch.eikonal = eik,
        }

        let loss = composite_loss(&self.state.network, &batch, &self.index, &self.cfg.loss)?;
        if let Some(component) = loss.non_finite_component() {
            log::error!("non-finite {component} at iteration {k}");
            return Err(Error::NonFinite { component, iteration: k });
        }
        if loss.eikonal_skipped > 0 {
            log::debug!("{} eikonal samples with vanishing gradient at iteration {k}", loss.eikonal_skipped);
        }
        let lr = lr_at(k, &self.cfg);
        let mut params = self.state.network.params_flat();
        adam_step(&mut params, &mut self.state.adam, &loss.gradient, lr, &self.cfg).map_err(|e| match e {
            Error::NonFinite { component, .. } => Error::NonFinite { component, iteration: k },
            other => other,
        })?;
        self.state.network.set_params_flat(&params)?;
        self.state.iteration += 1;
        if self.state.history.len() == HISTORY_LEN {
            self.state.history.pop_front();
        }
        self.state.history.push_back(loss.total);
        Ok(StepRecord {
            iteration: k,
            lr,
            total: loss.total,
            components: loss.components,
            accept_ratio,
        })
    }

    /// Run up to iteration `until` (exclusive, capped at the configured
    /// total), logging every `log_every` iterations and the last one.
    pub fn run_until<W: Write>(&mut self, until: usize, mut log: Option<&mut TrainingLog<W>>) -> Result<Vec<StepRecord>> {
        let until = until.min(self.cfg.iterations);
        let mut logged = Vec::new();
        while self.state.iteration < until {
            let r = self.step()?;
            let last = r.iteration + 1 == self.cfg.iterations;
            if r.iteration % self.cfg.log_every == 0 || last {
                log::info!(
                    "iter {:>6} lr {:.3e} loss {:.6}{}",
                    r.iteration,
                    r.lr,
                    r.total,
                    r.accept_ratio.map(|a| format!(" accept {a:.3}")).unwrap_or_default()
                );
                if let Some(l) = log.as_deref_mut() {
                    l.record(&r)?;
                }
                logged.push(r);
            }
        }
        Ok(logged)
    }
}

/// Train on an already-normalized cloud for the configured iterations.
pub fn fit(cloud: &PointCloud, cfg: &TrainConfig) -> Result<TrainState> {
    let mut trainer = Trainer::new(cloud.clone(), cfg.clone())?;
    trainer.run_until::<std::io::Sink>(cfg.iterations, None)?;
    Ok(trainer.into_state())
}
