//! Max pooling with stride equal to the window.
//!
//! The window notation is (along-width, along-height). Each window is
//! scanned in (dx, dy) lexicographic order and ties keep the first-scanned
//! element, so the backward routing is deterministic.

use crate::scalar::Scalar;
use crate::tensor::{ShapeError, Tensor};

/// Downsample `[W, H, C]` by taking the maximum of each `(wx, wy)` window.
/// Returns the pooled tensor and, per output element, the flat input offset
/// of its winning element.
pub fn maxpool<T: Scalar>(
    input: &Tensor<T>,
    window: (usize, usize),
) -> Result<(Tensor<T>, Vec<usize>), ShapeError> {
    let (wx, wy) = window;
    if input.rank() != 3 || wx == 0 || wy == 0 {
        return Err(ShapeError::Mismatch {
            left: input.shape().to_vec(),
            right: vec![wx, wy],
            context: "maxpool expects [W,H,C] input and a positive window",
        });
    }
    let (w, h, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if w % wx != 0 || h % wy != 0 {
        return Err(ShapeError::Mismatch {
            left: vec![w, h],
            right: vec![wx, wy],
            context: "maxpool window must divide the spatial extents",
        });
    }
    let (ow, oh) = (w / wx, h / wy);
    let mut out = Tensor::zeros(&[ow, oh, c]);
    let mut argmax = vec![0usize; ow * oh * c];
    let src = input.data();
    for ox in 0..ow {
        for oy in 0..oh {
            for ch in 0..c {
                let mut best_off = (ox * wx * h + oy * wy) * c + ch;
                let mut best = src[best_off];
                for dx in 0..wx {
                    for dy in 0..wy {
                        let off = ((ox * wx + dx) * h + (oy * wy + dy)) * c + ch;
                        if src[off] > best {
                            best = src[off];
                            best_off = off;
                        }
                    }
                }
                let slot = (ox * oh + oy) * c + ch;
                out.data_mut()[slot] = best;
                argmax[slot] = best_off;
            }
        }
    }
    Ok((out, argmax))
}

/// Route each upstream value to the input element that won its window.
pub fn maxpool_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    upstream: &Tensor<T>,
) -> Result<Tensor<T>, ShapeError> {
    if upstream.len() != argmax.len() {
        return Err(ShapeError::Mismatch {
            left: upstream.shape().to_vec(),
            right: vec![argmax.len()],
            context: "maxpool upstream gradient",
        });
    }
    let mut grad = Tensor::zeros(input_shape);
    for (&off, &u) in argmax.iter().zip(upstream.data()) {
        grad.data_mut()[off] += u;
    }
    Ok(grad)
}
