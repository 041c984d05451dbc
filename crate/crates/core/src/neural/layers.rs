//! Trainable layers over batched tensors.
//!
//! Image activations are `[N, H, W, C]`, vectors `[N, D]`. Every layer caches
//! what its backward pass needs during `forward`; `backward` consumes the
//! upstream gradient and accumulates parameter gradients into [`Param::grad`].
//! Per-sample work runs on the rayon pool, and gradient reductions are always
//! summed in sample order so the result does not depend on the thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ops;
use super::tensor::{gemm, MatRef, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-call state threaded through a forward pass.
pub struct Context {
    pub mode: Mode,
    pub rng: ChaCha8Rng,
}

impl Context {
    pub fn new(mode: Mode, rng: ChaCha8Rng) -> Self {
        Self { mode, rng }
    }

    pub fn infer() -> Self {
        use rand::SeedableRng;
        Self::new(Mode::Infer, ChaCha8Rng::seed_from_u64(0))
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }
}

/// A trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone)]
pub struct Param<T = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub moment1: Tensor<T>,
    pub moment2: Tensor<T>,
    /// Included in the L2 penalty (conv/dense kernels only).
    pub decay: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>, decay: bool) -> Self {
        let zeros = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            grad: zeros.clone(),
            moment1: zeros.clone(),
            moment2: zeros,
            value,
            decay,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// Non-trainable state saved with a model (batchnorm running statistics).
#[derive(Debug, Clone)]
pub struct Buffer<T = f32> {
    pub name: String,
    pub value: Tensor<T>,
}

pub trait Layer<T: Scalar>: Send + Sync {
    fn forward(&mut self, x: Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>>;

    fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        Vec::new()
    }
}

fn he_uniform<T: Scalar>(shape: &[usize], fan_in: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let limit = (6.0 / fan_in).sqrt();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

fn nhwc(t: &Tensor<impl Scalar>, what: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [n, h, w, c] => Ok([n, h, w, c]),
        ref s => Err(Error::shape(format!(
            "{what}: expected [N, H, W, C], got {s:?}"
        ))),
    }
}

fn taken<T>(cache: &mut Option<T>, what: &str) -> Result<T> {
    cache
        .take()
        .ok_or_else(|| Error::shape(format!("{what}: backward called without forward")))
}

// ---------------------------------------------------------------------------

/// 3x3 stride-1 same-padded convolution with bias.
pub struct Conv2d<T: Scalar> {
    pub kernel: Param<T>,
    pub bias: Param<T>,
    cin: usize,
    cout: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(name: &str, cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            kernel: Param::new(
                format!("{name}.kernel"),
                he_uniform(&[3, 3, cin, cout], (9 * cin) as f64, rng),
                true,
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[cout]), false),
            cin,
            cout,
            input: None,
        }
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        let [n, h, w, c] = nhwc(&x, "conv2d")?;
        if c != self.cin {
            return Err(Error::shape(format!(
                "{}: input has {c} channels, expected {}",
                self.kernel.name, self.cin
            )));
        }
        let (cin, cout) = (self.cin, self.cout);
        let mut out = vec![T::zero(); n * h * w * cout];
        let kernel = self.kernel.value.data();
        let bias = self.bias.value.data();
        out.par_chunks_mut(h * w * cout)
            .zip(x.data().par_chunks(h * w * cin))
            .for_each(|(o, xs)| {
                let mut col = vec![T::zero(); h * w * 9 * cin];
                ops::conv2d_forward_into(xs, kernel, bias, h, w, cin, cout, &mut col, o);
            });
        let y = Tensor::from_vec(&[n, h, w, cout], out)?;
        self.input = Some(x);
        Ok(y)
    }

    fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let x = taken(&mut self.input, "conv2d")?;
        let [n, h, w, _] = nhwc(&x, "conv2d")?;
        let (cin, cout) = (self.cin, self.cout);
        grad.expect_shape(&[n, h, w, cout], "conv2d grad")?;
        let kernel = self.kernel.value.data();
        let per_sample: Vec<(Vec<T>, Vec<T>, Vec<T>)> = x
            .data()
            .par_chunks(h * w * cin)
            .zip(grad.data().par_chunks(h * w * cout))
            .map(|(xs, dy)| {
                let mut col = vec![T::zero(); h * w * 9 * cin];
                let mut dx = vec![T::zero(); h * w * cin];
                let mut dk = vec![T::zero(); 9 * cin * cout];
                let mut db = vec![T::zero(); cout];
                ops::conv2d_backward_into(
                    xs, kernel, dy, h, w, cin, cout, &mut col, &mut dx, &mut dk, &mut db,
                );
                (dx, dk, db)
            })
            .collect();
        let mut dx_all = Vec::with_capacity(n * h * w * cin);
        for (dx, dk, db) in per_sample {
            dx_all.extend_from_slice(&dx);
            accumulate(self.kernel.grad.data_mut(), &dk);
            accumulate(self.bias.grad.data_mut(), &db);
        }
        Tensor::from_vec(&[n, h, w, cin], dx_all)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.kernel, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.kernel, &mut self.bias]
    }
}

fn accumulate<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

// ---------------------------------------------------------------------------

/// 3x3 stride-2 transposed convolution with bias; doubles H and W.
pub struct ConvTranspose2d<T: Scalar> {
    pub kernel: Param<T>,
    pub bias: Param<T>,
    cin: usize,
    cout: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new(name: &str, cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        // each output pixel sees on average 9/4 taps of every input channel
        let fan_in = 9.0 * cin as f64 / 4.0;
        Self {
            kernel: Param::new(
                format!("{name}.kernel"),
                he_uniform(&[3, 3, cout, cin], fan_in, rng),
                true,
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[cout]), false),
            cin,
            cout,
            input: None,
        }
    }
}

impl<T: Scalar> Layer<T> for ConvTranspose2d<T> {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        let [n, h, w, c] = nhwc(&x, "transposed conv")?;
        if c != self.cin {
            return Err(Error::shape(format!(
                "{}: input has {c} channels, expected {}",
                self.kernel.name, self.cin
            )));
        }
        let (cin, cout) = (self.cin, self.cout);
        let out_len = 4 * h * w * cout;
        let mut out = vec![T::zero(); n * out_len];
        let kernel = self.kernel.value.data();
        let bias = self.bias.value.data();
        out.par_chunks_mut(out_len)
            .zip(x.data().par_chunks(h * w * cin))
            .for_each(|(o, ys)| {
                let mut col = vec![T::zero(); h * w * 9 * cout];
                ops::tconv_forward_into(ys, kernel, h, w, cin, cout, &mut col, o);
                for px in o.chunks_exact_mut(cout) {
                    accumulate(px, bias);
                }
            });
        let y = Tensor::from_vec(&[n, 2 * h, 2 * w, cout], out)?;
        self.input = Some(x);
        Ok(y)
    }

    fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let x = taken(&mut self.input, "transposed conv")?;
        let [n, h, w, _] = nhwc(&x, "transposed conv")?;
        let (cin, cout) = (self.cin, self.cout);
        grad.expect_shape(&[n, 2 * h, 2 * w, cout], "transposed conv grad")?;
        let kernel = self.kernel.value.data();
        let per_sample: Vec<(Vec<T>, Vec<T>, Vec<T>)> = x
            .data()
            .par_chunks(h * w * cin)
            .zip(grad.data().par_chunks(4 * h * w * cout))
            .map(|(ys, dz)| {
                let mut col = vec![T::zero(); h * w * 9 * cout];
                let mut dy = vec![T::zero(); h * w * cin];
                let mut dk = vec![T::zero(); 9 * cout * cin];
                ops::tconv_backward_into(
                    ys, kernel, dz, h, w, cin, cout, &mut col, &mut dy, &mut dk,
                );
                let mut db = vec![T::zero(); cout];
                for px in dz.chunks_exact(cout) {
                    accumulate(&mut db, px);
                }
                (dy, dk, db)
            })
            .collect();
        let mut dx_all = Vec::with_capacity(n * h * w * cin);
        for (dy, dk, db) in per_sample {
            dx_all.extend_from_slice(&dy);
            accumulate(self.kernel.grad.data_mut(), &dk);
            accumulate(self.bias.grad.data_mut(), &db);
        }
        Tensor::from_vec(&[n, h, w, cin], dx_all)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.kernel, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.kernel, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Batch normalization over every axis except the last (channel) axis.
pub struct BatchNorm<T: Scalar> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Buffer<T>,
    pub running_var: Buffer<T>,
    channels: usize,
    cache: Option<BnCache<T>>,
}

struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    shape: Vec<usize>,
    train: bool,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::new(
                format!("{name}.gamma"),
                Tensor::full(&[channels], T::one()),
                false,
            ),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels]), false),
            running_mean: Buffer {
                name: format!("{name}.running_mean"),
                value: Tensor::zeros(&[channels]),
            },
            running_var: Buffer {
                name: format!("{name}.running_var"),
                value: Tensor::full(&[channels], T::one()),
            },
            channels,
            cache: None,
        }
    }
}

impl<T: Scalar> Layer<T> for BatchNorm<T> {
    fn forward(&mut self, x: Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        let c = self.channels;
        if x.shape().last() != Some(&c) || x.rank() < 2 {
            return Err(Error::shape(format!(
                "{}: expected {c} channels on the last axis, got {:?}",
                self.gamma.name,
                x.shape()
            )));
        }
        let eps = T::from_f64(BN_EPS);
        let (mean, var) = if ctx.is_train() {
            if x.batch() < 2 {
                return Err(Error::invalid(format!(
                    "{}: batch normalization needs at least 2 samples in training mode",
                    self.gamma.name
                )));
            }
            let count = T::from_f64((x.len() / c) as f64);
            let mut mean = vec![T::zero(); c];
            for px in x.data().chunks_exact(c) {
                accumulate(&mut mean, px);
            }
            mean.iter_mut().for_each(|m| *m /= count);
            let mut var = vec![T::zero(); c];
            for px in x.data().chunks_exact(c) {
                for ((v, &p), &m) in var.iter_mut().zip(px).zip(&mean) {
                    *v += (p - m) * (p - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= count);
            let mom = T::from_f64(BN_MOMENTUM);
            for (r, &m) in self.running_mean.value.data_mut().iter_mut().zip(&mean) {
                *r = mom * *r + (T::one() - mom) * m;
            }
            for (r, &v) in self.running_var.value.data_mut().iter_mut().zip(&var) {
                *r = mom * *r + (T::one() - mom) * v;
            }
            (mean, var)
        } else {
            (
                self.running_mean.value.data().to_vec(),
                self.running_var.value.data().to_vec(),
            )
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let shape = x.shape().to_vec();
        let mut xhat = x.data().to_vec();
        let mut y = x.into_vec();
        for (yp, hp) in y.chunks_exact_mut(c).zip(xhat.chunks_exact_mut(c)) {
            for k in 0..c {
                let h = (hp[k] - mean[k]) * inv_std[k];
                hp[k] = h;
                yp[k] = gamma[k] * h + beta[k];
            }
        }
        self.cache = Some(BnCache {
            xhat,
            inv_std,
            shape: shape.clone(),
            train: ctx.is_train(),
        });
        Tensor::from_vec(&shape, y)
    }

    fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let cache = taken(&mut self.cache, "batchnorm")?;
        grad.expect_shape(&cache.shape, "batchnorm grad")?;
        let c = self.channels;
        let mut dbeta = vec![T::zero(); c];
        let mut dgamma = vec![T::zero(); c];
        for (dy, h) in grad.data().chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for k in 0..c {
                dbeta[k] += dy[k];
                dgamma[k] += dy[k] * h[k];
            }
        }
        accumulate(self.beta.grad.data_mut(), &dbeta);
        accumulate(self.gamma.grad.data_mut(), &dgamma);
        let gamma = self.gamma.value.data();
        let mut dx = grad.into_vec();
        if cache.train {
            let m = T::from_f64((dx.len() / c) as f64);
            for (d, h) in dx.chunks_exact_mut(c).zip(cache.xhat.chunks_exact(c)) {
                for k in 0..c {
                    let scale = gamma[k] * cache.inv_std[k] / m;
                    d[k] = scale * (m * d[k] - dbeta[k] - h[k] * dgamma[k]);
                }
            }
        } else {
            for d in dx.chunks_exact_mut(c) {
                for k in 0..c {
                    d[k] *= gamma[k] * cache.inv_std[k];
                }
            }
        }
        Tensor::from_vec(&cache.shape, dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}

// ---------------------------------------------------------------------------

/// 2x2 max pooling, stride 2. Odd edges are padded with -inf.
#[derive(Default)]
pub struct MaxPool2x2 {
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2x2 {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for MaxPool2x2 {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        let [n, h, w, c] = nhwc(&x, "max pool")?;
        let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
        let mut out = Vec::with_capacity(n * ho * wo * c);
        let mut argmax = Vec::with_capacity(n * ho * wo * c);
        let data = x.data();
        for b in 0..n {
            for i in 0..ho {
                for j in 0..wo {
                    for k in 0..c {
                        let mut best = T::neg_infinity();
                        let mut best_idx = usize::MAX;
                        // row-major within the block; ties keep the first
                        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let (y, xx) = (2 * i + dy, 2 * j + dx);
                            if y >= h || xx >= w {
                                continue;
                            }
                            let idx = ((b * h + y) * w + xx) * c + k;
                            if best_idx == usize::MAX || data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                        out.push(best);
                        argmax.push(best_idx);
                    }
                }
            }
        }
        self.cache = Some((argmax, x.shape().to_vec()));
        Tensor::from_vec(&[n, ho, wo, c], out)
    }

    fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let (argmax, shape) = taken(&mut self.cache, "max pool")?;
        if grad.len() != argmax.len() {
            return Err(Error::shape("max pool grad size"));
        }
        let mut dx = Tensor::zeros(&shape);
        let d = dx.data_mut();
        for (&idx, &g) in argmax.iter().zip(grad.data()) {
            d[idx] += g;
        }
        Ok(dx)
    }
}

/// Maximum over all spatial positions per channel: `[N, H, W, C] -> [N, C]`.
#[derive(Default)]
pub struct GlobalMaxPool {
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl GlobalMaxPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for GlobalMaxPool {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        let [n, h, w, c] = nhwc(&x, "global max pool")?;
        let mut out = vec![T::neg_infinity(); n * c];
        let mut argmax = vec![usize::MAX; n * c];
        for b in 0..n {
            let base = b * h * w * c;
            for (p, px) in x.data()[base..base + h * w * c].chunks_exact(c).enumerate() {
                for (k, &v) in px.iter().enumerate() {
                    let o = b * c + k;
                    if argmax[o] == usize::MAX || v > out[o] {
                        out[o] = v;
                        argmax[o] = base + p * c + k;
                    }
                }
            }
        }
        self.cache = Some((argmax, x.shape().to_vec()));
        Tensor::from_vec(&[n, c], out)
    }

    fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let (argmax, shape) = taken(&mut self.cache, "global max pool")?;
        if grad.len() != argmax.len() {
            return Err(Error::shape("global max pool grad size"));
        }
        let mut dx = Tensor::zeros(&shape);
        let d = dx.data_mut();
        for (&idx, &g) in argmax.iter().zip(grad.data()) {
            d[idx] += g;
        }
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------

/// Fully connected layer `[N, D_in] -> [N, D_out]`.
pub struct Dense<T: Scalar> {
    pub weights: Param<T>,
    pub bias: Param<T>,
    din: usize,
    dout: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(name: &str, din: usize, dout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weights: Param::new(
                format!("{name}.weights"),
                he_uniform(&[din, dout], din as f64, rng),
                true,
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[dout]), false),
            din,
            dout,
            input: None,
        }
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        let n = match *x.shape() {
            [n, d] if d == self.din => n,
            ref s => {
                return Err(Error::shape(format!(
                    "{}: expected [N, {}], got {s:?}",
                    self.weights.name, self.din
                )))
            }
        };
        let mut out = vec![T::zero(); n * self.dout];
        for row in out.chunks_exact_mut(self.dout) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(
            T::one(),
            MatRef::new(x.data(), n, self.din),
            MatRef::new(self.weights.value.data(), self.din, self.dout),
            T::one(),
            &mut out,
        );
        self.input = Some(x);
        Tensor::from_vec(&[n, self.dout], out)
    }

    fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let x = taken(&mut self.input, "dense")?;
        let n = x.batch();
        grad.expect_shape(&[n, self.dout], "dense grad")?;
        gemm(
            T::one(),
            MatRef::new(x.data(), n, self.din).t(),
            MatRef::new(grad.data(), n, self.dout),
            T::one(),
            self.weights.grad.data_mut(),
        );
        for row in grad.data().chunks_exact(self.dout) {
            accumulate(self.bias.grad.data_mut(), row);
        }
        let mut dx = vec![T::zero(); n * self.din];
        gemm(
            T::one(),
            MatRef::new(grad.data(), n, self.dout),
            MatRef::new(self.weights.value.data(), self.din, self.dout).t(),
            T::zero(),
            &mut dx,
        );
        Tensor::from_vec(&[n, self.din], dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weights, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weights, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------

#[derive(Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Relu {
    fn forward(&mut self, mut x: Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        let mut mask = Vec::with_capacity(x.len());
        for v in x.data_mut() {
            let keep = *v > T::zero();
            if !keep {
                *v = T::zero();
            }
            mask.push(keep);
        }
        self.mask = Some(mask);
        Ok(x)
    }

    fn backward(&mut self, mut grad: Tensor<T>) -> Result<Tensor<T>> {
        let mask = taken(&mut self.mask, "relu")?;
        if mask.len() != grad.len() {
            return Err(Error::shape("relu grad size"));
        }
        for (g, keep) in grad.data_mut().iter_mut().zip(mask) {
            if !keep {
                *g = T::zero();
            }
        }
        Ok(grad)
    }
}

/// Softmax over the last axis.
#[derive(Default)]
pub struct Softmax<T> {
    output: Option<Tensor<T>>,
}

impl<T: Scalar> Softmax<T> {
    pub fn new() -> Self {
        Self { output: None }
    }
}

/// Row-wise shifted softmax over the last axis.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let d = x.shape().last().copied().unwrap_or(1).max(1);
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(d) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

impl<T: Scalar> Layer<T> for Softmax<T> {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        let y = softmax(&x);
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let y = taken(&mut self.output, "softmax")?;
        grad.expect_shape(y.shape(), "softmax grad")?;
        let d = y.shape().last().copied().unwrap_or(1);
        let mut dx = grad.into_vec();
        for (g, p) in dx.chunks_exact_mut(d).zip(y.data().chunks_exact(d)) {
            let dot: T = g.iter().zip(p).map(|(&a, &b)| a * b).sum();
            for (gi, &pi) in g.iter_mut().zip(p) {
                *gi = pi * (*gi - dot);
            }
        }
        Tensor::from_vec(y.shape(), dx)
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` in training.
pub struct Dropout<T> {
    rate: f64,
    mask: Option<Vec<T>>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64) -> Self {
        assert!(
            (0.0..1.0).contains(&rate),
            "dropout rate must lie in [0, 1)"
        );
        Self { rate, mask: None }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl<T: Scalar> Layer<T> for Dropout<T> {
    fn forward(&mut self, mut x: Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        if !ctx.is_train() || self.rate == 0.0 {
            self.mask = None;
            return Ok(x);
        }
        let scale = T::from_f64(1.0 / (1.0 - self.rate));
        let mask: Vec<T> = (0..x.len())
            .map(|_| {
                if ctx.rng.gen::<f64>() < self.rate {
                    T::zero()
                } else {
                    scale
                }
            })
            .collect();
        for (v, &m) in x.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        Ok(x)
    }

    fn backward(&mut self, mut grad: Tensor<T>) -> Result<Tensor<T>> {
        if let Some(mask) = self.mask.take() {
            for (g, m) in grad.data_mut().iter_mut().zip(mask) {
                *g *= m;
            }
        }
        Ok(grad)
    }
}

/// Reshapes each sample, keeping the batch axis.
pub struct Reshape {
    item_shape: Vec<usize>,
    input_shape: Option<Vec<usize>>,
}

impl Reshape {
    pub fn new(item_shape: &[usize]) -> Self {
        Self {
            item_shape: item_shape.to_vec(),
            input_shape: None,
        }
    }
}

impl<T: Scalar> Layer<T> for Reshape {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        let mut shape = vec![x.batch()];
        shape.extend_from_slice(&self.item_shape);
        self.input_shape = Some(x.shape().to_vec());
        x.reshape(&shape)
    }

    fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let shape = taken(&mut self.input_shape, "reshape")?;
        grad.reshape(&shape)
    }
}

// ---------------------------------------------------------------------------

/// An ordered stack of layers.
#[derive(Default)]
pub struct Sequential<T: Scalar> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new() -> Self {
        Self { layers: Vec::new() }
    }

    pub fn push(&mut self, layer: impl Layer<T> + 'static) -> &mut Self {
        self.layers.push(Box::new(layer));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn forward(&mut self, mut x: Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        for layer in &mut self.layers {
            x = layer.forward(x, ctx)?;
        }
        Ok(x)
    }

    pub fn backward(&mut self, mut grad: Tensor<T>) -> Result<Tensor<T>> {
        for layer in self.layers.iter_mut().rev() {
            grad = layer.backward(grad)?;
        }
        Ok(grad)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn buffers(&self) -> Vec<&Buffer<T>> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.buffers_mut())
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

impl<T: Scalar> Layer<T> for Sequential<T> {
    fn forward(&mut self, x: Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        Sequential::forward(self, x, ctx)
    }

    fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        Sequential::backward(self, grad)
    }

    fn params(&self) -> Vec<&Param<T>> {
        Sequential::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Sequential::params_mut(self)
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        Sequential::buffers(self)
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        Sequential::buffers_mut(self)
    }
}
