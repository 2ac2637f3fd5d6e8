//! Same-size 2-D convolution via im2col and a matrix product.
//!
//! Inputs are `[W, H, C]` with the channel axis innermost; zero padding of
//! (k-1)/2 on each side keeps the spatial extents, which requires odd kernel
//! extents.

use crate::scalar::Scalar;
use crate::tensor::{matmul_into, ElementwiseOp, ShapeError, Tensor};

use super::ConvParams;

fn check_conv<T: Scalar>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
) -> Result<(usize, usize, usize, usize, usize, usize), ShapeError> {
    let mismatch = |context| ShapeError::Mismatch {
        left: input.shape().to_vec(),
        right: p.kernels.shape().to_vec(),
        context,
    };
    if input.rank() != 3 || p.kernels.rank() != 4 {
        return Err(mismatch("conv2d expects [W,H,C] input and [kh,kw,Cin,Cout] kernels"));
    }
    let (w, h, cin) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let ks = p.kernels.shape();
    let (kh, kw, kcin, cout) = (ks[0], ks[1], ks[2], ks[3]);
    if kcin != cin {
        return Err(mismatch("conv2d input channels"));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(mismatch("conv2d kernel extents must be odd"));
    }
    if p.bias.shape() != [cout] {
        return Err(ShapeError::Mismatch {
            left: p.bias.shape().to_vec(),
            right: vec![cout],
            context: "conv2d bias",
        });
    }
    Ok((w, h, cin, kh, kw, cout))
}

/// Gathered patch matrix: one row per output position (x outer, y inner),
/// one column per (ky, kx, ci) in kernel order. Out-of-image taps are zero.
fn im2col<T: Scalar>(
    input: &Tensor<T>,
    w: usize,
    h: usize,
    cin: usize,
    kh: usize,
    kw: usize,
) -> Vec<T> {
    let (py, px) = (kh / 2, kw / 2);
    let cols = kh * kw * cin;
    let mut col = vec![T::zero(); w * h * cols];
    let src = input.data();
    for x in 0..w {
        for y in 0..h {
            let row = (x * h + y) * cols;
            for ky in 0..kh {
                let yy = y as isize + ky as isize - py as isize;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let xx = x as isize + kx as isize - px as isize;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    let dst = row + (ky * kw + kx) * cin;
                    let s = (xx as usize * h + yy as usize) * cin;
                    col[dst..dst + cin].copy_from_slice(&src[s..s + cin]);
                }
            }
        }
    }
    col
}

/// Convolve `input` with the kernels, preserving spatial extents.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
) -> Result<Tensor<T>, ShapeError> {
    let (w, h, cin, kh, kw, cout) = check_conv(input, p)?;
    let col = im2col(input, w, h, cin, kh, kw);
    let mut out = Tensor::zeros(&[w, h, cout]);
    let k = kh * kw * cin;
    matmul_into(&col, p.kernels.data(), out.data_mut(), w * h, k, cout, false);
    out.elementwise(&p.bias, ElementwiseOp::Add)
}

/// Gradients of [`conv2d_forward`] with respect to input, kernels and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), ShapeError> {
    let mut grad_kernels = Tensor::zeros(p.kernels.shape());
    let mut grad_bias = Tensor::zeros(p.bias.shape());
    let grad_input = conv2d_backward_into(input, p, upstream, &mut grad_kernels, &mut grad_bias)?;
    Ok((grad_input, grad_kernels, grad_bias))
}

/// As [`conv2d_backward`] but accumulates the parameter gradients into the
/// given tensors; callers summing over a batch reuse one accumulator.
pub fn conv2d_backward_into<T: Scalar>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
    upstream: &Tensor<T>,
    grad_kernels: &mut Tensor<T>,
    grad_bias: &mut Tensor<T>,
) -> Result<Tensor<T>, ShapeError> {
    let (w, h, cin, kh, kw, cout) = check_conv(input, p)?;
    if upstream.shape() != [w, h, cout] {
        return Err(ShapeError::Mismatch {
            left: upstream.shape().to_vec(),
            right: vec![w, h, cout],
            context: "conv2d upstream gradient",
        });
    }
    debug_assert_eq!(grad_kernels.shape(), p.kernels.shape());
    debug_assert_eq!(grad_bias.shape(), p.bias.shape());

    let positions = w * h;
    let k = kh * kw * cin;

    // Bias: sum of upstream over spatial positions, per channel.
    for pos in 0..positions {
        let row = &upstream.data()[pos * cout..(pos + 1) * cout];
        for (g, &u) in grad_bias.data_mut().iter_mut().zip(row) {
            *g += u;
        }
    }

    // Kernels: col^T x upstream.
    let col = im2col(input, w, h, cin, kh, kw);
    let col_mat = Tensor::from_vec(&[positions, k], col)?;
    let col_t = col_mat.transposed()?;
    matmul_into(
        col_t.data(),
        upstream.data(),
        grad_kernels.data_mut(),
        k,
        positions,
        cout,
        true,
    );

    // Input: scatter upstream x kernels^T back through the patch geometry.
    let up_mat = upstream.clone().reshape(&[positions, cout])?;
    let dcol = up_mat.matmul_nt(&p.kernels.clone().reshape(&[k, cout])?)?;
    let mut grad_input = Tensor::zeros(input.shape());
    let (py, px) = (kh / 2, kw / 2);
    let gi = grad_input.data_mut();
    for x in 0..w {
        for y in 0..h {
            let row = (x * h + y) * k;
            for ky in 0..kh {
                let yy = y as isize + ky as isize - py as isize;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let xx = x as isize + kx as isize - px as isize;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    let s = row + (ky * kw + kx) * cin;
                    let d = (xx as usize * h + yy as usize) * cin;
                    for c in 0..cin {
                        gi[d + c] += dcol.data()[s + c];
                    }
                }
            }
        }
    }
    Ok(grad_input)
}
