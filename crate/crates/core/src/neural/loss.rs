use super::layers::Param;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Regularization and probability clipping for the KL objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda_l2: f64,
    pub epsilon_prob: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_l2: 1e-4,
            epsilon_prob: 1e-7,
        }
    }
}

/// A scalar loss and its gradient with respect to the prediction.
#[derive(Debug, Clone)]
pub struct LossValue<T> {
    pub value: f64,
    pub grad: Tensor<T>,
}

const NORMALIZATION_TOL: f64 = 1e-4;

/// `(lambda / 2) * sum of squared decayed weights`.
pub fn l2_penalty<'a, T: Scalar>(
    params: impl IntoIterator<Item = &'a Param<T>>,
    lambda: f64,
) -> f64 {
    let sq: f64 = params
        .into_iter()
        .filter(|p| p.decay)
        .map(|p| p.value.sum_squares().as_f64())
        .sum();
    0.5 * lambda * sq
}

/// Adds `lambda * w` to the gradient of every decayed weight.
pub fn add_l2_gradient<'a, T: Scalar>(
    params: impl IntoIterator<Item = &'a mut Param<T>>,
    lambda: f64,
) {
    let lambda = T::from_f64(lambda);
    for p in params.into_iter().filter(|p| p.decay) {
        for (g, &w) in p.grad.data_mut().iter_mut().zip(p.value.data()) {
            *g += lambda * w;
        }
    }
}

/// Batch-summed KL divergence `sum y * ln(y / yhat)` plus the L2 penalty.
///
/// Predictions are clipped to `[epsilon_prob, 1]` before the log, terms with
/// `y == 0` contribute nothing, and the returned gradient is with respect to
/// `yhat` (zero where the clip is active). The penalty's own gradient is
/// applied separately with [`add_l2_gradient`].
pub fn kl_divergence_loss<'a, T: Scalar>(
    y: &Tensor<T>,
    yhat: &Tensor<T>,
    params: impl IntoIterator<Item = &'a Param<T>>,
    cfg: &LossConfig,
) -> Result<LossValue<T>> {
    if y.shape() != yhat.shape() || y.rank() != 2 {
        return Err(Error::shape(format!(
            "kl loss: targets {:?} vs predictions {:?}",
            y.shape(),
            yhat.shape()
        )));
    }
    let classes = y.shape()[1];
    let eps = cfg.epsilon_prob;
    let mut value = 0.0;
    let mut grad = Tensor::zeros(yhat.shape());
    for (row, ((t, p), g)) in y
        .data()
        .chunks_exact(classes)
        .zip(yhat.data().chunks_exact(classes))
        .zip(grad.data_mut().chunks_exact_mut(classes))
        .enumerate()
    {
        let total: f64 = p.iter().map(|v| v.as_f64()).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!(
                "kl loss: prediction row {row} sums to {total}"
            )));
        }
        for ((&ti, &pi), gi) in t.iter().zip(p).zip(g.iter_mut()) {
            let (ti, pi) = (ti.as_f64(), pi.as_f64());
            let clipped = pi.clamp(eps, 1.0);
            if ti > 0.0 {
                value += ti * (ti / clipped).ln();
                if pi >= eps && pi <= 1.0 {
                    *gi = T::from_f64(-ti / clipped);
                }
            }
        }
    }
    value += l2_penalty(params, cfg.lambda_l2);
    Ok(LossValue { value, grad })
}

/// `(1 / 2N) * sum over the batch of the per-pixel mean squared error`.
pub fn mse_loss<T: Scalar>(x: &Tensor<T>, xhat: &Tensor<T>) -> Result<LossValue<T>> {
    if x.shape() != xhat.shape() || x.is_empty() {
        return Err(Error::shape(format!(
            "mse loss: target {:?} vs reconstruction {:?}",
            x.shape(),
            xhat.shape()
        )));
    }
    let n = x.batch() as f64;
    let pixels = x.item_len().max(1) as f64;
    let sq: f64 = x
        .data()
        .iter()
        .zip(xhat.data())
        .map(|(&a, &b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum();
    let value = sq / (2.0 * n * pixels);
    let scale = 1.0 / (n * pixels);
    let grad: Vec<T> = x
        .data()
        .iter()
        .zip(xhat.data())
        .map(|(&a, &b)| T::from_f64((b.as_f64() - a.as_f64()) * scale))
        .collect();
    Ok(LossValue {
        value,
        grad: Tensor::from_vec(x.shape(), grad)?,
    })
}
