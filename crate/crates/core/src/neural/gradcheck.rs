//! Central finite-difference gradient checking.

use super::tensor::{Scalar, Tensor};

/// Compares `analytic` against the central difference
/// `(f(x + h) - f(x - h)) / 2h` taken element by element around `point`.
///
/// Returns the relative error `|a - n| / max(|a|, |n|)` measured in the
/// Euclidean norm over all elements, which stays meaningful when individual
/// gradient entries are near zero.
pub fn finite_diff_gradcheck<T: Scalar>(
    mut f: impl FnMut(&Tensor<T>) -> f64,
    point: &Tensor<T>,
    analytic: &Tensor<T>,
    h: f64,
) -> f64 {
    assert_eq!(point.shape(), analytic.shape(), "gradient shape");
    let numeric = numeric_gradient(&mut f, point, h);
    relative_error(analytic.data(), &numeric)
}

pub fn numeric_gradient<T: Scalar>(
    f: &mut impl FnMut(&Tensor<T>) -> f64,
    point: &Tensor<T>,
    h: f64,
) -> Vec<f64> {
    let mut x = point.clone();
    (0..point.len())
        .map(|i| {
            let orig = x.data()[i];
            x.data_mut()[i] = T::from_f64(orig.as_f64() + h);
            let up = f(&x);
            x.data_mut()[i] = T::from_f64(orig.as_f64() - h);
            let down = f(&x);
            x.data_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error<T: Scalar>(analytic: &[T], numeric: &[f64]) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let a = a.as_f64();
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
    }
    let scale = na.sqrt().max(nn.sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}
