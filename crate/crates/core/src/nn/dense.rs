//! Per-timestep affine projection from recurrent features to logits.

use crate::scalar::Scalar;
use crate::tensor::{matmul_into, ElementwiseOp, ShapeError, Tensor};

use super::DenseParams;

fn check_dense<T: Scalar>(
    seq: &Tensor<T>,
    p: &DenseParams<T>,
) -> Result<(usize, usize, usize), ShapeError> {
    if seq.rank() != 2 || p.weight.rank() != 2 || seq.shape()[1] != p.weight.shape()[1] {
        return Err(ShapeError::Mismatch {
            left: seq.shape().to_vec(),
            right: p.weight.shape().to_vec(),
            context: "projection widths",
        });
    }
    Ok((seq.shape()[0], seq.shape()[1], p.weight.shape()[0]))
}

/// `out[t] = weight . seq[t] + bias` for every step.
pub fn project<T: Scalar>(seq: &Tensor<T>, p: &DenseParams<T>) -> Result<Tensor<T>, ShapeError> {
    check_dense(seq, p)?;
    seq.matmul_nt(&p.weight)?
        .elementwise(&p.bias, ElementwiseOp::Add)
}

/// Gradient of [`project`]; parameter gradients accumulate into `gw`, `gb`.
pub fn project_backward_into<T: Scalar>(
    seq: &Tensor<T>,
    p: &DenseParams<T>,
    upstream: &Tensor<T>,
    gw: &mut Tensor<T>,
    gb: &mut Tensor<T>,
) -> Result<Tensor<T>, ShapeError> {
    let (t, d, o) = check_dense(seq, p)?;
    if upstream.shape() != [t, o] {
        return Err(ShapeError::Mismatch {
            left: upstream.shape().to_vec(),
            right: vec![t, o],
            context: "projection upstream gradient",
        });
    }
    for row in upstream.data().chunks(o) {
        for (g, &u) in gb.data_mut().iter_mut().zip(row) {
            *g += u;
        }
    }
    let up_t = upstream.transposed()?;
    matmul_into(up_t.data(), seq.data(), gw.data_mut(), o, t, d, true);
    upstream.matmul(&p.weight)
}

/// As [`project_backward_into`] with freshly zeroed parameter gradients.
pub fn project_backward<T: Scalar>(
    seq: &Tensor<T>,
    p: &DenseParams<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), ShapeError> {
    let mut gw = Tensor::zeros(p.weight.shape());
    let mut gb = Tensor::zeros(p.bias.shape());
    let grad_seq = project_backward_into(seq, p, upstream, &mut gw, &mut gb)?;
    Ok((grad_seq, gw, gb))
}
