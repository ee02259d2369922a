use std::ops::Range;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::{Precision, Real};
use crate::rng::{stream, Purpose};

use super::{ParametricField, ScalarField};

/// Points per evaluation chunk. Fixed so that reductions over chunks happen
/// in the same order regardless of how many threads run them.
const CHUNK: usize = 128;

/// Architecture of the coordinate MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Hidden layers whose input is `[h, x] / √2` instead of `h`.
    pub skip_layers: Vec<usize>,
    /// Softplus β.
    pub activation_sharpness: f64,
    pub init_radius: f64,
    pub precision: Precision,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            input_dim: 3,
            hidden_layers: 8,
            hidden_width: 256,
            skip_layers: vec![4],
            activation_sharpness: 100.0,
            init_radius: 0.5,
            precision: Precision::F32,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.input_dim) {
            return Err(Error::config(format!(
                "input_dim must be 2 or 3, got {}",
                self.input_dim
            )));
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::config("hidden_layers and hidden_width must be at least 1"));
        }
        if let Some(s) = self.skip_layers.iter().find(|&&s| s >= self.hidden_layers) {
            return Err(Error::config(format!(
                "skip layer {s} out of range for {} hidden layers",
                self.hidden_layers
            )));
        }
        if !(self.activation_sharpness > 0.0) {
            return Err(Error::config("activation_sharpness must be positive"));
        }
        if !(self.init_radius > 0.0) {
            return Err(Error::config("init_radius must be positive"));
        }
        Ok(())
    }

    fn is_skip(&self, layer: usize) -> bool {
        layer < self.hidden_layers && self.skip_layers.contains(&layer)
    }

    /// Width of the input to hidden layer `layer` (or to the output layer when
    /// `layer == hidden_layers`).
    pub fn layer_input_width(&self, layer: usize) -> usize {
        let base = if layer == 0 {
            self.input_dim
        } else {
            self.hidden_width
        };
        if self.is_skip(layer) {
            base + self.input_dim
        } else {
            base
        }
    }

    /// `(rows, cols)` of every weight matrix, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..=self.hidden_layers)
            .map(|k| {
                let rows = if k == self.hidden_layers {
                    1
                } else {
                    self.hidden_width
                };
                (rows, self.layer_input_width(k))
            })
            .collect()
    }

    /// d_θ.
    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c + r).sum()
    }
}

/// Borrowed weights and bias of one layer; `weights` is row-major `rows x cols`.
#[derive(Debug)]
pub struct LayerView<'a, T> {
    pub rows: usize,
    pub cols: usize,
    pub weights: &'a [T],
    pub bias: &'a [T],
}

/// Softplus MLP with optional input skip connections.
///
/// Parameters θ live in one flat vector; each layer is its weight matrix
/// followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T: Real> {
    config: FieldConfig,
    params: Vec<T>,
    offsets: Vec<usize>,
}

impl<T: Real> Mlp<T> {
    pub fn zeros(config: FieldConfig) -> Result<Self> {
        config.validate()?;
        let n = config.num_params();
        Self::from_flat(config, vec![T::ZERO; n])
    }

    pub fn from_flat(config: FieldConfig, params: Vec<T>) -> Result<Self> {
        config.validate()?;
        if params.len() != config.num_params() {
            return Err(Error::DimensionMismatch {
                expected: config.num_params(),
                got: params.len(),
            });
        }
        let mut offsets = Vec::with_capacity(config.hidden_layers + 1);
        let mut at = 0;
        for (r, c) in config.layer_shapes() {
            offsets.push(at);
            at += r * c + r;
        }
        Ok(Self {
            config,
            params,
            offsets,
        })
    }

    /// Build from per-layer `(weights, bias)` pairs.
    pub fn from_layers(config: FieldConfig, layers: Vec<(Vec<T>, Vec<T>)>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(Error::DimensionMismatch {
                expected: shapes.len(),
                got: layers.len(),
            });
        }
        let mut flat = Vec::with_capacity(config.num_params());
        for ((w, b), (r, c)) in layers.into_iter().zip(shapes) {
            if w.len() != r * c || b.len() != r {
                return Err(Error::DimensionMismatch {
                    expected: r * c + r,
                    got: w.len() + b.len(),
                });
            }
            flat.extend(w);
            flat.extend(b);
        }
        Self::from_flat(config, flat)
    }

    /// Geometric initialization: the zero-level set starts out close to a
    /// sphere of radius `init_radius` around the origin.
    pub fn init_geometric(config: FieldConfig, seed: u64) -> Result<Self> {
        let mut mlp = Self::zeros(config)?;
        let mut rng = stream(seed, 0, Purpose::Init);
        let shapes = mlp.config.layer_shapes();
        let last = shapes.len() - 1;
        for (k, &(rows, cols)) in shapes.iter().enumerate() {
            let off = mlp.offsets[k];
            let (w, b) = mlp.params[off..off + rows * cols + rows].split_at_mut(rows * cols);
            if k == last {
                let mean = std::f64::consts::PI.sqrt() / (cols as f64).sqrt();
                let dist = Normal::new(mean, 1e-4).expect("valid normal");
                for v in w.iter_mut() {
                    *v = T::from_f64(dist.sample(&mut rng));
                }
                b[0] = T::from_f64(-mlp.config.init_radius);
            } else {
                let std = 2f64.sqrt() / (rows as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("valid normal");
                for v in w.iter_mut() {
                    *v = T::from_f64(dist.sample(&mut rng));
                }
                b.fill(T::ZERO);
            }
        }
        Ok(mlp)
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn layer(&self, k: usize) -> LayerView<'_, T> {
        let (rows, cols) = self.config.layer_shapes()[k];
        let off = self.offsets[k];
        LayerView {
            rows,
            cols,
            weights: &self.params[off..off + rows * cols],
            bias: &self.params[off + rows * cols..off + rows * cols + rows],
        }
    }

    pub fn num_layers(&self) -> usize {
        self.offsets.len()
    }

    /// Per-layer `(weights, bias)` copies; inverse of [`Mlp::from_layers`].
    pub fn to_layers(&self) -> Vec<(Vec<T>, Vec<T>)> {
        (0..self.num_layers())
            .map(|k| {
                let l = self.layer(k);
                (l.weights.to_vec(), l.bias.to_vec())
            })
            .collect()
    }

    /// Same network in another precision.
    pub fn cast<U: Real>(&self) -> Mlp<U> {
        let mut config = self.config.clone();
        config.precision = U::PRECISION;
        Mlp {
            config,
            params: self.params.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            offsets: self.offsets.clone(),
        }
    }

    /// Hidden-layer pre-activations at one point, for inspection.
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.len(),
            });
        }
        let xs: Vec<T> = x.iter().map(|&v| T::from_f64(v)).collect();
        let tape = self.forward(&xs, 1);
        Ok(tape
            .pre
            .iter()
            .map(|z| z.iter().map(|v| v.to_f64()).collect())
            .collect())
    }

    fn beta(&self) -> T {
        T::from_f64(self.config.activation_sharpness)
    }

    /// Runs `f` over fixed-size chunks of an `n`-point batch in parallel and
    /// returns the per-chunk results in order.
    fn map_chunks<R: Send>(&self, n: usize, f: impl Fn(Range<usize>) -> R + Sync) -> Vec<R> {
        let chunks = n.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
            .collect()
    }

    fn forward(&self, xs: &[T], n: usize) -> Tape<T> {
        let cfg = &self.config;
        let d = cfg.input_dim;
        let w = cfg.hidden_width;
        let scale = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
        let beta = self.beta();

        let mut acts = Vec::with_capacity(cfg.hidden_layers + 1);
        let mut slopes = Vec::with_capacity(cfg.hidden_layers);
        let mut pre = Vec::with_capacity(cfg.hidden_layers);
        acts.push(if cfg.is_skip(0) {
            concat_scaled(xs, d, xs, d, n, scale)
        } else {
            xs.to_vec()
        });

        for k in 0..cfg.hidden_layers {
            let layer = self.layer(k);
            let mut z = vec![T::ZERO; n * w];
            matmul_abt(n, layer.cols, w, &acts[k], layer.weights, &mut z);
            for row in z.chunks_exact_mut(w) {
                for (zi, bi) in row.iter_mut().zip(layer.bias) {
                    *zi += *bi;
                }
            }
            let mut h = vec![T::ZERO; n * w];
            let mut s = vec![T::ZERO; n * w];
            for ((zi, hi), si) in z.iter().zip(h.iter_mut()).zip(s.iter_mut()) {
                let (v, ds) = softplus(*zi, beta);
                *hi = v;
                *si = ds;
            }
            let next = if cfg.is_skip(k + 1) {
                concat_scaled(&h, w, xs, d, n, scale)
            } else {
                h
            };
            acts.push(next);
            slopes.push(s);
            pre.push(z);
        }

        let out = self.layer(cfg.hidden_layers);
        let values = acts[cfg.hidden_layers]
            .chunks_exact(w)
            .map(|a| dot_t(a, out.weights) + out.bias[0])
            .collect();
        Tape {
            n,
            acts,
            slopes,
            pre,
            values,
        }
    }

    /// Directional derivative of every activation along per-point input
    /// directions `us`.
    fn forward_tangent(&self, tape: &Tape<T>, us: &[T]) -> Tangent<T> {
        let cfg = &self.config;
        let n = tape.n;
        let d = cfg.input_dim;
        let w = cfg.hidden_width;
        let scale = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);

        let mut acts = Vec::with_capacity(cfg.hidden_layers + 1);
        let mut pre = Vec::with_capacity(cfg.hidden_layers);
        acts.push(if cfg.is_skip(0) {
            concat_scaled(us, d, us, d, n, scale)
        } else {
            us.to_vec()
        });
        for k in 0..cfg.hidden_layers {
            let layer = self.layer(k);
            let mut zt = vec![T::ZERO; n * w];
            matmul_abt(n, layer.cols, w, &acts[k], layer.weights, &mut zt);
            let ht: Vec<T> = zt
                .iter()
                .zip(&tape.slopes[k])
                .map(|(z, s)| *z * *s)
                .collect();
            let next = if cfg.is_skip(k + 1) {
                concat_scaled(&ht, w, us, d, n, scale)
            } else {
                ht
            };
            acts.push(next);
            pre.push(zt);
        }
        Tangent { acts, pre }
    }

    /// Reverse pass with per-point output seeds. Accumulates parameter
    /// gradients into `grads` when given and returns the input adjoint when
    /// `want_input` is set.
    fn backward(
        &self,
        tape: &Tape<T>,
        seeds: &[T],
        mut grads: Option<&mut [T]>,
        want_input: bool,
    ) -> Option<Vec<T>> {
        let cfg = &self.config;
        let n = tape.n;
        let d = cfg.input_dim;
        let w = cfg.hidden_width;
        let l_out = cfg.hidden_layers;
        let scale = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);

        let out = self.layer(l_out);
        let mut abar = vec![T::ZERO; n * w];
        for (row, &s) in abar.chunks_exact_mut(w).zip(seeds) {
            for (a, wo) in row.iter_mut().zip(out.weights) {
                *a = s * *wo;
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            let off = self.offsets[l_out];
            for (a, &s) in tape.acts[l_out].chunks_exact(w).zip(seeds) {
                for (gi, ai) in g[off..off + w].iter_mut().zip(a) {
                    *gi += s * *ai;
                }
            }
            g[off + w] += seeds.iter().fold(T::ZERO, |acc, &s| acc + s);
        }

        let mut xbar = if want_input {
            Some(vec![T::ZERO; n * d])
        } else {
            None
        };
        let mut abar_width = w;
        for k in (0..l_out).rev() {
            let mut zbar = split_adjoint(&abar, abar_width, w, n, scale, cfg.is_skip(k + 1), xbar.as_deref_mut());
            for (z, s) in zbar.iter_mut().zip(&tape.slopes[k]) {
                *z *= *s;
            }
            let layer = self.layer(k);
            if let Some(g) = grads.as_deref_mut() {
                accumulate_layer_grad(g, self.offsets[k], n, w, layer.cols, &zbar, &tape.acts[k]);
            }
            if k > 0 || want_input {
                abar = vec![T::ZERO; n * layer.cols];
                matmul_ab(n, w, layer.cols, &zbar, layer.weights, &mut abar, T::ZERO);
                abar_width = layer.cols;
            }
        }

        let mut xbar = xbar?;
        fold_input_adjoint(&abar, abar_width, d, n, scale, cfg.is_skip(0), &mut xbar);
        Some(xbar)
    }

    /// Forward-over-reverse pass. With primal seed 1 and tangent seed `sᵢ`
    /// on every output, the tangent of the parameter gradient equals
    /// `sᵢ ∇_θ f(xᵢ) + ∇_θ (uᵢ · ∇ₓ f(xᵢ))`, accumulated into `grads`.
    fn backward_tangent(&self, tape: &Tape<T>, tan: &Tangent<T>, seeds: &[T], grads: &mut [T]) {
        let cfg = &self.config;
        let n = tape.n;
        let w = cfg.hidden_width;
        let l_out = cfg.hidden_layers;
        let scale = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
        let beta = self.beta();

        let out = self.layer(l_out);
        let mut abar = vec![T::ZERO; n * w];
        let mut abar_t = vec![T::ZERO; n * w];
        for ((row, row_t), &s) in abar
            .chunks_exact_mut(w)
            .zip(abar_t.chunks_exact_mut(w))
            .zip(seeds)
        {
            row.copy_from_slice(out.weights);
            for (a, wo) in row_t.iter_mut().zip(out.weights) {
                *a = s * *wo;
            }
        }
        let off = self.offsets[l_out];
        for ((a, at), &s) in tape.acts[l_out]
            .chunks_exact(w)
            .zip(tan.acts[l_out].chunks_exact(w))
            .zip(seeds)
        {
            for ((gi, ai), ati) in grads[off..off + w].iter_mut().zip(a).zip(at) {
                *gi += s * *ai + *ati;
            }
        }
        grads[off + w] += seeds.iter().fold(T::ZERO, |acc, &s| acc + s);

        let mut abar_width = w;
        for k in (0..l_out).rev() {
            let skip = cfg.is_skip(k + 1);
            let hbar = split_adjoint(&abar, abar_width, w, n, scale, skip, None);
            let hbar_t = split_adjoint(&abar_t, abar_width, w, n, scale, skip, None);
            let slope = &tape.slopes[k];
            let zt = &tan.pre[k];
            let mut zbar = vec![T::ZERO; n * w];
            let mut zbar_t = vec![T::ZERO; n * w];
            for i in 0..n * w {
                let s = slope[i];
                let curvature = beta * s * (T::ONE - s);
                zbar[i] = hbar[i] * s;
                zbar_t[i] = hbar_t[i] * s + hbar[i] * curvature * zt[i];
            }
            let layer = self.layer(k);
            accumulate_layer_grad(grads, self.offsets[k], n, w, layer.cols, &zbar_t, &tape.acts[k]);
            // cross term: primal adjoint against tangent activations
            accumulate_weight_grad(grads, self.offsets[k], n, w, layer.cols, &zbar, &tan.acts[k]);
            if k > 0 {
                abar = vec![T::ZERO; n * layer.cols];
                abar_t = vec![T::ZERO; n * layer.cols];
                matmul_ab(n, w, layer.cols, &zbar, layer.weights, &mut abar, T::ZERO);
                matmul_ab(n, w, layer.cols, &zbar_t, layer.weights, &mut abar_t, T::ZERO);
                abar_width = layer.cols;
            }
        }
    }

    fn to_t(xs: &[f64]) -> Vec<T> {
        xs.iter().map(|&v| T::from_f64(v)).collect()
    }
}

struct Tape<T> {
    n: usize,
    /// Inputs to each layer, output layer last.
    acts: Vec<Vec<T>>,
    /// Softplus derivative at each hidden pre-activation.
    slopes: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    values: Vec<T>,
}

struct Tangent<T> {
    acts: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
}

#[inline]
fn softplus<T: Real>(z: T, beta: T) -> (T, T) {
    let t = beta * z;
    if t > T::ZERO {
        let e = (-t).exp();
        (z + e.ln_1p() / beta, T::ONE / (T::ONE + e))
    } else {
        let e = t.exp();
        (e.ln_1p() / beta, e / (T::ONE + e))
    }
}

#[inline]
fn dot_t<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::ZERO, |acc, (x, y)| acc + *x * *y)
}

fn concat_scaled<T: Real>(a: &[T], wa: usize, b: &[T], wb: usize, n: usize, s: T) -> Vec<T> {
    let mut out = Vec::with_capacity(n * (wa + wb));
    for i in 0..n {
        out.extend(a[i * wa..(i + 1) * wa].iter().map(|v| *v * s));
        out.extend(b[i * wb..(i + 1) * wb].iter().map(|v| *v * s));
    }
    out
}

/// Adjoint of a layer input, split into the hidden part (returned) and the
/// skip part (added to `xbar`).
fn split_adjoint<T: Real>(
    abar: &[T],
    width: usize,
    hidden: usize,
    n: usize,
    scale: T,
    skip: bool,
    xbar: Option<&mut [T]>,
) -> Vec<T> {
    if !skip {
        return abar.to_vec();
    }
    let d = width - hidden;
    let mut out = Vec::with_capacity(n * hidden);
    for row in abar.chunks_exact(width) {
        out.extend(row[..hidden].iter().map(|v| *v * scale));
    }
    if let Some(xbar) = xbar {
        for (row, xr) in abar.chunks_exact(width).zip(xbar.chunks_exact_mut(d)) {
            for (x, v) in xr.iter_mut().zip(&row[hidden..]) {
                *x += *v * scale;
            }
        }
    }
    out
}

fn fold_input_adjoint<T: Real>(
    abar: &[T],
    width: usize,
    d: usize,
    n: usize,
    scale: T,
    skip: bool,
    xbar: &mut [T],
) {
    for i in 0..n {
        let row = &abar[i * width..(i + 1) * width];
        let xr = &mut xbar[i * d..(i + 1) * d];
        if skip {
            for a in 0..d {
                xr[a] += (row[a] + row[d + a]) * scale;
            }
        } else {
            for a in 0..d {
                xr[a] += row[a];
            }
        }
    }
}

fn accumulate_weight_grad<T: Real>(
    grads: &mut [T],
    off: usize,
    n: usize,
    rows: usize,
    cols: usize,
    zbar: &[T],
    acts: &[T],
) {
    // gW += zbarᵀ · acts
    unsafe {
        T::gemm(
            rows,
            n,
            cols,
            T::ONE,
            zbar.as_ptr(),
            1,
            rows as isize,
            acts.as_ptr(),
            cols as isize,
            1,
            T::ONE,
            grads[off..off + rows * cols].as_mut_ptr(),
            cols as isize,
            1,
        );
    }
}

fn accumulate_layer_grad<T: Real>(
    grads: &mut [T],
    off: usize,
    n: usize,
    rows: usize,
    cols: usize,
    zbar: &[T],
    acts: &[T],
) {
    accumulate_weight_grad(grads, off, n, rows, cols, zbar, acts);
    let gb = &mut grads[off + rows * cols..off + rows * cols + rows];
    for row in zbar.chunks_exact(rows) {
        for (g, z) in gb.iter_mut().zip(row) {
            *g += *z;
        }
    }
}

/// `z (n x out) = a (n x inp) · wᵀ` with `w` row-major `out x inp`.
fn matmul_abt<T: Real>(n: usize, inp: usize, out: usize, a: &[T], w: &[T], z: &mut [T]) {
    debug_assert_eq!(a.len(), n * inp);
    debug_assert_eq!(w.len(), out * inp);
    debug_assert_eq!(z.len(), n * out);
    unsafe {
        T::gemm(
            n,
            inp,
            out,
            T::ONE,
            a.as_ptr(),
            inp as isize,
            1,
            w.as_ptr(),
            1,
            inp as isize,
            T::ZERO,
            z.as_mut_ptr(),
            out as isize,
            1,
        );
    }
}

/// `c (n x inp) = beta c + zbar (n x out) · w (out x inp)`.
fn matmul_ab<T: Real>(n: usize, out: usize, inp: usize, zbar: &[T], w: &[T], c: &mut [T], beta: T) {
    debug_assert_eq!(zbar.len(), n * out);
    debug_assert_eq!(c.len(), n * inp);
    unsafe {
        T::gemm(
            n,
            out,
            inp,
            T::ONE,
            zbar.as_ptr(),
            out as isize,
            1,
            w.as_ptr(),
            inp as isize,
            1,
            beta,
            c.as_mut_ptr(),
            inp as isize,
            1,
        );
    }
}

impl<T: Real> ScalarField for Mlp<T> {
    fn dim(&self) -> usize {
        self.config.input_dim
    }

    fn values(&self, xs: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let n = xs.len() / d;
        self.map_chunks(n, |r| {
            let x = Self::to_t(&xs[r.start * d..r.end * d]);
            self.forward(&x, r.len()).values
        })
        .into_iter()
        .flatten()
        .map(|v| v.to_f64())
        .collect()
    }

    fn values_and_gradients(&self, xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let n = xs.len() / d;
        let parts = self.map_chunks(n, |r| {
            let x = Self::to_t(&xs[r.start * d..r.end * d]);
            let tape = self.forward(&x, r.len());
            let ones = vec![T::ONE; r.len()];
            let g = self.backward(&tape, &ones, None, true).expect("input adjoint");
            (tape.values, g)
        });
        let mut values = Vec::with_capacity(n);
        let mut grads = Vec::with_capacity(n * d);
        for (v, g) in parts {
            values.extend(v.into_iter().map(|v| v.to_f64()));
            grads.extend(g.into_iter().map(|v| v.to_f64()));
        }
        (values, grads)
    }

    fn parametric(&self) -> Option<&dyn ParametricField> {
        Some(self)
    }
}

impl<T: Real> ParametricField for Mlp<T> {
    fn num_params(&self) -> usize {
        self.params.len()
    }

    fn params_flat(&self) -> Vec<f64> {
        self.params.iter().map(|v| v.to_f64()).collect()
    }

    fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: flat.len(),
            });
        }
        for (p, v) in self.params.iter_mut().zip(flat) {
            *p = T::from_f64(*v);
        }
        Ok(())
    }

    fn param_vjp(
        &self,
        xs: &[f64],
        seed_value: &[f64],
        seed_gradient: Option<&[f64]>,
    ) -> Vec<f64> {
        let d = self.dim();
        let n = xs.len() / d;
        assert_eq!(seed_value.len(), n, "one value seed per point");
        if let Some(u) = seed_gradient {
            assert_eq!(u.len(), n * d, "one gradient seed per point");
        }
        let np = self.params.len();
        let parts = self.map_chunks(n, |r| {
            let x = Self::to_t(&xs[r.start * d..r.end * d]);
            let s = Self::to_t(&seed_value[r.clone()]);
            let mut grads = vec![T::ZERO; np];
            let tape = self.forward(&x, r.len());
            match seed_gradient.map(|u| &u[r.start * d..r.end * d]) {
                Some(u) if u.iter().any(|v| *v != 0.0) => {
                    let tan = self.forward_tangent(&tape, &Self::to_t(u));
                    self.backward_tangent(&tape, &tan, &s, &mut grads);
                }
                _ => {
                    self.backward(&tape, &s, Some(&mut grads), false);
                }
            }
            grads
        });
        let mut total = vec![0.0; np];
        for part in parts {
            for (t, g) in total.iter_mut().zip(part) {
                *t += g.to_f64();
            }
        }
        total
    }
}

/// An MLP whose precision is chosen at runtime.
#[derive(Clone, Debug, PartialEq)]
pub enum Network {
    F32(Mlp<f32>),
    F64(Mlp<f64>),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            Network::F32($m) => $body,
            Network::F64($m) => $body,
        }
    };
}

impl Network {
    pub fn init_geometric(config: FieldConfig, seed: u64) -> Result<Self> {
        Ok(match config.precision {
            Precision::F32 => Network::F32(Mlp::init_geometric(config, seed)?),
            Precision::F64 => Network::F64(Mlp::init_geometric(config, seed)?),
        })
    }

    pub fn config(&self) -> &FieldConfig {
        dispatch!(self, m => m.config())
    }

    pub fn precision(&self) -> Precision {
        self.config().precision
    }
}

impl ScalarField for Network {
    fn dim(&self) -> usize {
        dispatch!(self, m => m.dim())
    }

    fn values(&self, xs: &[f64]) -> Vec<f64> {
        dispatch!(self, m => m.values(xs))
    }

    fn values_and_gradients(&self, xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        dispatch!(self, m => m.values_and_gradients(xs))
    }

    fn parametric(&self) -> Option<&dyn ParametricField> {
        Some(self)
    }
}

impl ParametricField for Network {
    fn num_params(&self) -> usize {
        dispatch!(self, m => m.num_params())
    }

    fn params_flat(&self) -> Vec<f64> {
        dispatch!(self, m => m.params_flat())
    }

    fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        dispatch!(self, m => m.set_params_flat(flat))
    }

    fn param_vjp(&self, xs: &[f64], seed_value: &[f64], seed_gradient: Option<&[f64]>) -> Vec<f64> {
        dispatch!(self, m => m.param_vjp(xs, seed_value, seed_gradient))
    }
}
