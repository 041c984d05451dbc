//! Single-sample convolution kernels on `[H, W, C]` tensors.
//!
//! Convolutions are lowered to a patch matrix (im2col) followed by GEMM.
//! Kernels are stored `[3, 3, C_in, C_out]`, which flattens to a
//! `(9 * C_in) x C_out` matrix whose row index matches the patch column
//! index `(ky * 3 + kx) * C_in + c`.

use super::tensor::{gemm, MatRef, Scalar, Tensor};
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Geometry of a 3x3 convolution between an input and an output grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub h_in: usize,
    pub w_in: usize,
    pub h_out: usize,
    pub w_out: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Geometry {
    /// Stride 1 with a one pixel zero border: output grid equals input grid.
    pub fn same(h: usize, w: usize) -> Self {
        Self {
            h_in: h,
            w_in: w,
            h_out: h,
            w_out: w,
            stride: 1,
            pad: 1,
        }
    }

    /// Stride 2 from a `2h x 2w` grid down to `h x w`. The padding is all
    /// on the bottom/right edge, which is what "same" padding gives for an
    /// even input and a 3x3 kernel.
    pub fn halving(h: usize, w: usize) -> Self {
        Self {
            h_in: 2 * h,
            w_in: 2 * w,
            h_out: h,
            w_out: w,
            stride: 2,
            pad: 0,
        }
    }

    #[inline]
    fn source(&self, out: usize, tap: usize) -> Option<usize> {
        let pos = (out * self.stride + tap).checked_sub(self.pad)?;
        Some(pos)
    }
}

/// Gathers the 3x3 neighbourhoods of `x` (`h_in x w_in x c`) into a
/// `(h_out * w_out) x (9 * c)` matrix.
pub(crate) fn im2col<T: Scalar>(x: &[T], c: usize, g: Geometry, col: &mut [T]) {
    let row_len = TAPS * c;
    debug_assert_eq!(col.len(), g.h_out * g.w_out * row_len);
    for i in 0..g.h_out {
        for j in 0..g.w_out {
            let row = &mut col[(i * g.w_out + j) * row_len..][..row_len];
            for ky in 0..KERNEL {
                let yi = g.source(i, ky).filter(|&y| y < g.h_in);
                for kx in 0..KERNEL {
                    let dst = &mut row[(ky * KERNEL + kx) * c..][..c];
                    match (yi, g.source(j, kx).filter(|&x| x < g.w_in)) {
                        (Some(yy), Some(xx)) => {
                            dst.copy_from_slice(&x[(yy * g.w_in + xx) * c..][..c]);
                        }
                        _ => dst.fill(T::zero()),
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds patch rows back onto the input grid.
pub(crate) fn col2im<T: Scalar>(col: &[T], c: usize, g: Geometry, x: &mut [T]) {
    let row_len = TAPS * c;
    debug_assert_eq!(x.len(), g.h_in * g.w_in * c);
    for i in 0..g.h_out {
        for j in 0..g.w_out {
            let row = &col[(i * g.w_out + j) * row_len..][..row_len];
            for ky in 0..KERNEL {
                let Some(yy) = g.source(i, ky).filter(|&y| y < g.h_in) else {
                    continue;
                };
                for kx in 0..KERNEL {
                    let Some(xx) = g.source(j, kx).filter(|&x| x < g.w_in) else {
                        continue;
                    };
                    let src = &row[(ky * KERNEL + kx) * c..][..c];
                    let dst = &mut x[(yy * g.w_in + xx) * c..][..c];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

fn hwc(t: &Tensor<impl Scalar>, what: &str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(Error::shape(format!(
            "{what}: expected [H, W, C], got {s:?}"
        ))),
    }
}

fn kernel_dims(k: &Tensor<impl Scalar>) -> Result<(usize, usize)> {
    match *k.shape() {
        [KERNEL, KERNEL, a, b] => Ok((a, b)),
        ref s => Err(Error::shape(format!(
            "kernel: expected [3, 3, _, _], got {s:?}"
        ))),
    }
}

/// Stride-1 same-padded 3x3 cross-correlation.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (h, w, cin) = hwc(input, "conv2d input")?;
    let (kin, cout) = kernel_dims(kernel)?;
    if kin != cin {
        return Err(Error::shape(format!(
            "conv2d: input has {cin} channels, kernel expects {kin}"
        )));
    }
    bias.expect_shape(&[cout], "conv2d bias")?;
    let mut out = vec![T::zero(); h * w * cout];
    let mut col = vec![T::zero(); h * w * TAPS * cin];
    conv2d_forward_into(
        input.data(),
        kernel.data(),
        bias.data(),
        h,
        w,
        cin,
        cout,
        &mut col,
        &mut out,
    );
    Tensor::from_vec(&[h, w, cout], out)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_forward_into<T: Scalar>(
    x: &[T],
    kernel: &[T],
    bias: &[T],
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    col: &mut [T],
    out: &mut [T],
) {
    im2col(x, cin, Geometry::same(h, w), col);
    for row in out.chunks_exact_mut(cout) {
        row.copy_from_slice(bias);
    }
    gemm(
        T::one(),
        MatRef::new(col, h * w, TAPS * cin),
        MatRef::new(kernel, TAPS * cin, cout),
        T::one(),
        out,
    );
}

/// Gradients of [`conv2d`] for one sample.
pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<Conv2dGrads<T>> {
    let (h, w, cin) = hwc(input, "conv2d input")?;
    let (_, cout) = kernel_dims(kernel)?;
    grad_out.expect_shape(&[h, w, cout], "conv2d grad")?;
    let mut dx = vec![T::zero(); h * w * cin];
    let mut dk = vec![T::zero(); TAPS * cin * cout];
    let mut db = vec![T::zero(); cout];
    let mut col = vec![T::zero(); h * w * TAPS * cin];
    conv2d_backward_into(
        input.data(),
        kernel.data(),
        grad_out.data(),
        h,
        w,
        cin,
        cout,
        &mut col,
        &mut dx,
        &mut dk,
        &mut db,
    );
    Ok(Conv2dGrads {
        input: Tensor::from_vec(&[h, w, cin], dx)?,
        kernel: Tensor::from_vec(kernel.shape(), dk)?,
        bias: Tensor::from_vec(&[cout], db)?,
    })
}

/// Accumulates kernel/bias gradients into `dk`/`db` and overwrites `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward_into<T: Scalar>(
    x: &[T],
    kernel: &[T],
    dy: &[T],
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    col: &mut [T],
    dx: &mut [T],
    dk: &mut [T],
    db: &mut [T],
) {
    let g = Geometry::same(h, w);
    im2col(x, cin, g, col);
    gemm(
        T::one(),
        MatRef::new(col, h * w, TAPS * cin).t(),
        MatRef::new(dy, h * w, cout),
        T::one(),
        dk,
    );
    for row in dy.chunks_exact(cout) {
        for (b, &d) in db.iter_mut().zip(row) {
            *b += d;
        }
    }
    gemm(
        T::one(),
        MatRef::new(dy, h * w, cout),
        MatRef::new(kernel, TAPS * cin, cout).t(),
        T::zero(),
        col,
    );
    dx.fill(T::zero());
    col2im(col, cin, g, dx);
}

/// Stride-2 3x3 convolution (no bias) mapping `[2H, 2W, C]` to `[H, W, C_out]`.
///
/// This is the forward operator whose adjoint is [`transposed_conv2d`].
pub fn conv2d_stride2<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>) -> Result<Tensor<T>> {
    let (h2, w2, c) = hwc(input, "conv2d_stride2 input")?;
    let (kin, cout) = kernel_dims(kernel)?;
    if kin != c || h2 % 2 != 0 || w2 % 2 != 0 {
        return Err(Error::shape(format!(
            "conv2d_stride2: input {:?} incompatible with kernel {:?}",
            input.shape(),
            kernel.shape()
        )));
    }
    let g = Geometry::halving(h2 / 2, w2 / 2);
    let mut col = vec![T::zero(); g.h_out * g.w_out * TAPS * c];
    im2col(input.data(), c, g, &mut col);
    let mut out = vec![T::zero(); g.h_out * g.w_out * cout];
    gemm(
        T::one(),
        MatRef::new(&col, g.h_out * g.w_out, TAPS * c),
        MatRef::new(kernel.data(), TAPS * c, cout),
        T::zero(),
        &mut out,
    );
    Tensor::from_vec(&[g.h_out, g.w_out, cout], out)
}

/// Stride-2 transposed convolution (no bias): `[H, W, C_in]` to `[2H, 2W, C_out]`
/// with a `[3, 3, C_out, C_in]` kernel.
pub fn transposed_conv2d<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, cin) = hwc(input, "transposed_conv2d input")?;
    let (cout, kin) = kernel_dims(kernel)?;
    if kin != cin {
        return Err(Error::shape(format!(
            "transposed_conv2d: input has {cin} channels, kernel expects {kin}"
        )));
    }
    let mut out = vec![T::zero(); 4 * h * w * cout];
    let mut col = vec![T::zero(); h * w * TAPS * cout];
    tconv_forward_into(
        input.data(),
        kernel.data(),
        h,
        w,
        cin,
        cout,
        &mut col,
        &mut out,
    );
    Tensor::from_vec(&[2 * h, 2 * w, cout], out)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn tconv_forward_into<T: Scalar>(
    y: &[T],
    kernel: &[T],
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    col: &mut [T],
    out: &mut [T],
) {
    gemm(
        T::one(),
        MatRef::new(y, h * w, cin),
        MatRef::new(kernel, TAPS * cout, cin).t(),
        T::zero(),
        col,
    );
    out.fill(T::zero());
    col2im(col, cout, Geometry::halving(h, w), out);
}

/// Overwrites `dy`, accumulates into `dk`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn tconv_backward_into<T: Scalar>(
    y: &[T],
    kernel: &[T],
    dz: &[T],
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    col: &mut [T],
    dy: &mut [T],
    dk: &mut [T],
) {
    im2col(dz, cout, Geometry::halving(h, w), col);
    gemm(
        T::one(),
        MatRef::new(col, h * w, TAPS * cout),
        MatRef::new(kernel, TAPS * cout, cin),
        T::zero(),
        dy,
    );
    gemm(
        T::one(),
        MatRef::new(col, h * w, TAPS * cout).t(),
        MatRef::new(y, h * w, cin),
        T::one(),
        dk,
    );
}
