#![allow(dead_code)]

use lungnet_core::dsp::{GamPatch, LabeledPatch};
use lungnet_core::neural::gradcheck::{numeric_gradient, relative_error};
use lungnet_core::neural::{
    add_l2_gradient, kl_divergence_loss, l2_penalty, mse_loss, softmax, BatchNorm, Context, Conv2d,
    ConvTranspose2d, Dense, Dropout, GlobalMaxPool, Layer, LossConfig, MaxPool2x2, Mode, Param,
    Relu, Reshape, Scalar, Softmax, Tensor,
};
use lungnet_core::CycleLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform<T: Scalar>(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n).map(|_| T::from_f64(rng.gen_range(lo..hi))).collect(),
    )
    .unwrap()
}

/// Distinct values at least `gap` apart, in random order, so that max
/// selections survive a perturbation smaller than `gap / 2`.
pub fn separated<T: Scalar>(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * gap).collect();
    v.shuffle(rng);
    Tensor::from_vec(shape, v.into_iter().map(T::from_f64).collect()).unwrap()
}

/// Errors of a layer's input gradient and of each parameter gradient.
pub struct LayerCheck {
    pub input: f64,
    pub params: Vec<(String, f64)>,
}

impl LayerCheck {
    pub fn worst(&self) -> f64 {
        self.params.iter().map(|p| p.1).fold(self.input, f64::max)
    }
}

fn probe_value<T: Scalar>(
    layer: &mut dyn Layer<T>,
    x: &Tensor<T>,
    probe: &Tensor<T>,
    mode: Mode,
    seed: u64,
) -> f64 {
    let mut ctx = Context::new(mode, rng(seed));
    layer.forward(x.clone(), &mut ctx).unwrap().dot(probe)
}

/// Checks `d<probe, layer(x)>` against central differences with respect to
/// the input and every parameter. The forward context is reseeded on each
/// call so stochastic layers see the same mask.
pub fn check_layer<T: Scalar>(
    layer: &mut dyn Layer<T>,
    x: &Tensor<T>,
    mode: Mode,
    h: f64,
    seed: u64,
) -> LayerCheck {
    let ctx_seed = seed ^ 0x5eed;
    let mut ctx = Context::new(mode, rng(ctx_seed));
    let y = layer.forward(x.clone(), &mut ctx).unwrap();
    let probe: Tensor<T> = uniform(y.shape(), -1.0, 1.0, &mut rng(seed.wrapping_add(99)));
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let dx = layer.backward(probe.clone()).unwrap();
    let analytic_params: Vec<(String, Tensor<T>)> = layer
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.grad.clone()))
        .collect();

    let mut xp = x.clone();
    let numeric_x: Vec<f64> = (0..x.len())
        .map(|i| {
            let orig = xp.data()[i];
            xp.data_mut()[i] = T::from_f64(orig.as_f64() + h);
            let up = probe_value(layer, &xp, &probe, mode, ctx_seed);
            xp.data_mut()[i] = T::from_f64(orig.as_f64() - h);
            let down = probe_value(layer, &xp, &probe, mode, ctx_seed);
            xp.data_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect();
    let input = relative_error(dx.data(), &numeric_x);

    let mut params = Vec::new();
    for (k, (name, analytic)) in analytic_params.iter().enumerate() {
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..analytic.len() {
            let orig = layer.params_mut()[k].value.data()[i];
            layer.params_mut()[k].value.data_mut()[i] = T::from_f64(orig.as_f64() + h);
            let up = probe_value(layer, x, &probe, mode, ctx_seed);
            layer.params_mut()[k].value.data_mut()[i] = T::from_f64(orig.as_f64() - h);
            let down = probe_value(layer, x, &probe, mode, ctx_seed);
            layer.params_mut()[k].value.data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
        params.push((name.clone(), relative_error(analytic.data(), &numeric)));
    }
    LayerCheck { input, params }
}

pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

pub struct Precision {
    pub h: f64,
    pub tol: f64,
}

pub const F32: Precision = Precision { h: 1e-3, tol: 1e-3 };
pub const F64: Precision = Precision { h: 1e-6, tol: 1e-5 };

pub const LAYERS: [&str; 13] = [
    "dense",
    "conv2d",
    "transposed_conv",
    "batchnorm_train",
    "batchnorm_infer",
    "maxpool",
    "maxpool_odd_edges",
    "global_maxpool",
    "relu",
    "softmax",
    "dropout",
    "reshape",
    "identity_dropout_infer",
];

/// A layer under test, its input and the mode to run it in.
pub fn layer_case<T: Scalar>(name: &str, seed: u64) -> (Box<dyn Layer<T>>, Tensor<T>, Mode) {
    let mut r = rng(seed);
    match name {
        "dense" => (
            Box::new(Dense::new("d", 5, 4, &mut r)),
            uniform(&[3, 5], -1.0, 1.0, &mut r),
            Mode::Train,
        ),
        "conv2d" => (
            Box::new(Conv2d::new("c", 2, 3, &mut r)),
            uniform(&[2, 5, 6, 2], -1.0, 1.0, &mut r),
            Mode::Train,
        ),
        "transposed_conv" => (
            Box::new(ConvTranspose2d::new("t", 2, 3, &mut r)),
            uniform(&[2, 3, 4, 2], -1.0, 1.0, &mut r),
            Mode::Train,
        ),
        "batchnorm_train" => {
            let mut bn = BatchNorm::new("bn", 3);
            bn.gamma.value = uniform(&[3], 0.5, 1.5, &mut r);
            bn.beta.value = uniform(&[3], -0.5, 0.5, &mut r);
            (
                Box::new(bn),
                uniform(&[4, 3, 2, 3], -1.0, 1.0, &mut r),
                Mode::Train,
            )
        }
        "batchnorm_infer" => {
            let mut bn = BatchNorm::new("bn", 3);
            bn.running_mean.value = uniform(&[3], -0.3, 0.3, &mut r);
            bn.running_var.value = uniform(&[3], 0.5, 2.0, &mut r);
            (
                Box::new(bn),
                uniform(&[2, 2, 2, 3], -1.0, 1.0, &mut r),
                Mode::Infer,
            )
        }
        "maxpool" => (
            Box::new(MaxPool2x2::new()),
            separated(&[2, 4, 6, 2], 0.05, &mut r),
            Mode::Train,
        ),
        "maxpool_odd_edges" => (
            Box::new(MaxPool2x2::new()),
            separated(&[1, 5, 3, 2], 0.05, &mut r),
            Mode::Train,
        ),
        "global_maxpool" => (
            Box::new(GlobalMaxPool::new()),
            separated(&[2, 3, 3, 4], 0.05, &mut r),
            Mode::Train,
        ),
        "relu" => {
            let data = (0..21)
                .map(|_| {
                    let v = r.gen_range(0.1..1.0);
                    T::from_f64(if r.gen_bool(0.5) { -v } else { v })
                })
                .collect();
            (
                Box::new(Relu::new()),
                Tensor::from_vec(&[3, 7], data).unwrap(),
                Mode::Train,
            )
        }
        "softmax" => (
            Box::new(Softmax::new()),
            uniform(&[3, 4], -2.0, 2.0, &mut r),
            Mode::Train,
        ),
        "dropout" => (
            Box::new(Dropout::new(0.3)),
            uniform(&[4, 6], -1.0, 1.0, &mut r),
            Mode::Train,
        ),
        "identity_dropout_infer" => (
            Box::new(Dropout::new(0.3)),
            uniform(&[4, 6], -1.0, 1.0, &mut r),
            Mode::Infer,
        ),
        "reshape" => (
            Box::new(Reshape::new(&[2, 3, 1])),
            uniform(&[2, 6], -1.0, 1.0, &mut r),
            Mode::Train,
        ),
        other => panic!("unknown layer case {other}"),
    }
}

/// Worst gradient error of a named layer case over all seeds.
pub fn layer_error<T: Scalar>(name: &str, p: &Precision) -> f64 {
    SEEDS
        .iter()
        .map(|&seed| {
            let (mut layer, x, mode) = layer_case::<T>(name, seed);
            check_layer(layer.as_mut(), &x, mode, p.h, seed).worst()
        })
        .fold(0.0, f64::max)
}

fn soft_targets<T: Scalar>(rows: usize, seed: u64) -> Tensor<T> {
    let raw: Tensor<f64> = uniform(&[rows, 4], 0.0, 1.0, &mut rng(seed));
    let mut data = Vec::new();
    for row in raw.data().chunks(4) {
        let s: f64 = row.iter().sum();
        data.extend(row.iter().map(|v| T::from_f64(v / s)));
    }
    Tensor::from_vec(&[rows, 4], data).unwrap()
}

/// KL divergence composed with a softmax, differentiated with respect to the
/// logits, since the loss is only defined on the probability simplex.
pub fn kl_error<T: Scalar>(p: &Precision) -> f64 {
    let cfg = LossConfig {
        lambda_l2: 0.0,
        ..LossConfig::default()
    };
    SEEDS
        .iter()
        .map(|&seed| {
            let y = soft_targets::<T>(3, seed);
            let logits: Tensor<T> = uniform(&[3, 4], -2.0, 2.0, &mut rng(seed + 50));
            let mut sm = Softmax::<T>::new();
            let yhat = sm.forward(logits.clone(), &mut Context::infer()).unwrap();
            let loss = kl_divergence_loss(&y, &yhat, std::iter::empty(), &cfg).unwrap();
            let analytic = sm.backward(loss.grad).unwrap();
            let mut f = |z: &Tensor<T>| {
                kl_divergence_loss(&y, &softmax(z), std::iter::empty(), &cfg)
                    .unwrap()
                    .value
            };
            relative_error(analytic.data(), &numeric_gradient(&mut f, &logits, p.h))
        })
        .fold(0.0, f64::max)
}

pub fn l2_error<T: Scalar>(p: &Precision) -> f64 {
    SEEDS
        .iter()
        .map(|&seed| {
            let w: Tensor<T> = uniform(&[3, 3], -1.0, 1.0, &mut rng(seed));
            let mut param = Param::new("w", w.clone(), true);
            add_l2_gradient(std::iter::once(&mut param), 1e-2);
            let mut f = |v: &Tensor<T>| {
                l2_penalty(std::iter::once(&Param::new("w", v.clone(), true)), 1e-2)
            };
            relative_error(param.grad.data(), &numeric_gradient(&mut f, &w, p.h))
        })
        .fold(0.0, f64::max)
}

pub fn mse_error<T: Scalar>(p: &Precision) -> f64 {
    SEEDS
        .iter()
        .map(|&seed| {
            let x: Tensor<T> = uniform(&[2, 3, 3, 1], 0.0, 1.0, &mut rng(seed));
            let xhat: Tensor<T> = uniform(&[2, 3, 3, 1], 0.0, 1.0, &mut rng(seed + 20));
            let analytic = mse_loss(&x, &xhat).unwrap().grad;
            let mut f = |v: &Tensor<T>| mse_loss(&x, v).unwrap().value;
            relative_error(analytic.data(), &numeric_gradient(&mut f, &xhat, p.h))
        })
        .fold(0.0, f64::max)
}

/// Row-major patch whose `quadrant` (0..4, reading order) is bright.
pub fn quadrant_patch(
    quadrant: usize,
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
    id: &str,
) -> GamPatch {
    let (qr, qc) = (quadrant / 2, quadrant % 2);
    let values = (0..rows * cols)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            let inside = r / (rows / 2) == qr && c / (cols / 2) == qc;
            let base = if inside { 0.8 } else { 0.2 };
            (base + rng.gen_range(-0.1..0.1f32)).clamp(0.0, 1.0)
        })
        .collect();
    GamPatch {
        values,
        rows,
        cols,
        cycle_id: id.to_string(),
        patch_index: 0,
    }
}

/// `per_class` patches per class, class `k` bright in quadrant `k`.
pub fn quadrant_dataset(
    per_class: usize,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Vec<LabeledPatch> {
    let mut r = rng(seed);
    (0..per_class * 4)
        .map(|i| {
            let label = CycleLabel::ALL[i % 4];
            LabeledPatch {
                patch: quadrant_patch(label.index(), rows, cols, &mut r, &format!("syn#{i}")),
                label,
            }
        })
        .collect()
}

/// Smooth random patches: a few Gaussian blobs over a noisy floor.
pub fn blob_patches(n: usize, rows: usize, cols: usize, seed: u64) -> Vec<GamPatch> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let blobs: Vec<(f32, f32, f32)> = (0..3)
                .map(|_| {
                    (
                        r.gen_range(0.0..rows as f32),
                        r.gen_range(0.0..cols as f32),
                        r.gen_range(0.3..0.7),
                    )
                })
                .collect();
            let values = (0..rows * cols)
                .map(|k| {
                    let (y, x) = ((k / cols) as f32, (k % cols) as f32);
                    let v: f32 = blobs
                        .iter()
                        .map(|&(by, bx, a)| {
                            a * (-((y - by).powi(2) + (x - bx).powi(2)) / 18.0).exp()
                        })
                        .sum();
                    (0.1 + v + r.gen_range(0.0..0.05)).min(1.0)
                })
                .collect();
            GamPatch {
                values,
                rows,
                cols,
                cycle_id: format!("blob#{i}"),
                patch_index: 0,
            }
        })
        .collect()
}
