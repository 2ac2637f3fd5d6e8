//! Batch normalization over `[N, W, H, C]` activations, statistics taken
//! per channel across everything else.

use crate::scalar::Scalar;
use crate::tensor::{ShapeError, Tensor};

use super::BatchNormParams;

/// What the backward pass needs from a training-mode forward.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
    count: usize,
}

fn channel_count<T: Scalar>(
    input: &Tensor<T>,
    p: &BatchNormParams<T>,
) -> Result<usize, ShapeError> {
    let c = *input.shape().last().ok_or(ShapeError::Mismatch {
        left: input.shape().to_vec(),
        right: p.gamma.shape().to_vec(),
        context: "batchnorm input rank",
    })?;
    if p.gamma.shape() != [c] {
        return Err(ShapeError::Mismatch {
            left: input.shape().to_vec(),
            right: p.gamma.shape().to_vec(),
            context: "batchnorm channels",
        });
    }
    Ok(c)
}

/// Normalize by batch statistics, apply the affine transform and update the
/// running statistics in `p`. Variance is the biased (1/M) estimate.
pub fn batchnorm_train<T: Scalar>(
    input: &Tensor<T>,
    p: &mut BatchNormParams<T>,
) -> Result<(Tensor<T>, BnCache<T>), ShapeError> {
    let c = channel_count(input, p)?;
    let count = input.len() / c;
    let m = T::c(count as f64);

    let mut mean = vec![T::zero(); c];
    for (i, &x) in input.data().iter().enumerate() {
        mean[i % c] += x;
    }
    for v in &mut mean {
        *v /= m;
    }
    let mut var = vec![T::zero(); c];
    for (i, &x) in input.data().iter().enumerate() {
        let d = x - mean[i % c];
        var[i % c] += d * d;
    }
    for v in &mut var {
        *v /= m;
    }

    let inv_std: Vec<T> = var.iter().map(|&v| (v + p.epsilon).sqrt().recip()).collect();
    let mut normalized = input.clone();
    for (i, x) in normalized.data_mut().iter_mut().enumerate() {
        let ch = i % c;
        *x = (*x - mean[ch]) * inv_std[ch];
    }
    let mut out = normalized.clone();
    for (i, x) in out.data_mut().iter_mut().enumerate() {
        let ch = i % c;
        *x = p.gamma.data()[ch] * *x + p.beta.data()[ch];
    }

    let keep = p.momentum;
    let blend = T::one() - keep;
    for ch in 0..c {
        p.running_mean.data_mut()[ch] = keep * p.running_mean.data()[ch] + blend * mean[ch];
        p.running_var.data_mut()[ch] = keep * p.running_var.data()[ch] + blend * var[ch];
    }

    Ok((
        out,
        BnCache {
            normalized,
            inv_std,
            count,
        },
    ))
}

/// Normalize by the running statistics; no state is touched.
pub fn batchnorm_infer<T: Scalar>(
    input: &Tensor<T>,
    p: &BatchNormParams<T>,
) -> Result<Tensor<T>, ShapeError> {
    let c = channel_count(input, p)?;
    let inv_std: Vec<T> = p
        .running_var
        .data()
        .iter()
        .map(|&v| (v + p.epsilon).sqrt().recip())
        .collect();
    let mut out = input.clone();
    for (i, x) in out.data_mut().iter_mut().enumerate() {
        let ch = i % c;
        *x = p.gamma.data()[ch] * (*x - p.running_mean.data()[ch]) * inv_std[ch]
            + p.beta.data()[ch];
    }
    Ok(out)
}

/// Gradients for input, gamma and beta given a training-mode cache.
pub fn batchnorm_backward<T: Scalar>(
    cache: &BnCache<T>,
    p: &BatchNormParams<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), ShapeError> {
    if upstream.shape() != cache.normalized.shape() {
        return Err(ShapeError::Mismatch {
            left: upstream.shape().to_vec(),
            right: cache.normalized.shape().to_vec(),
            context: "batchnorm upstream gradient",
        });
    }
    let c = p.gamma.len();
    let m = T::c(cache.count as f64);

    let mut grad_gamma = Tensor::zeros(&[c]);
    let mut grad_beta = Tensor::zeros(&[c]);
    // Per-channel sums of dy and dy*xhat feed both the parameter gradients
    // and the input gradient below.
    for (i, (&dy, &xh)) in upstream
        .data()
        .iter()
        .zip(cache.normalized.data())
        .enumerate()
    {
        let ch = i % c;
        grad_beta.data_mut()[ch] += dy;
        grad_gamma.data_mut()[ch] += dy * xh;
    }

    // dx = gamma * inv_std / M * (M*dy - sum(dy) - xhat * sum(dy*xhat))
    let mut grad_input = upstream.clone();
    for (i, g) in grad_input.data_mut().iter_mut().enumerate() {
        let ch = i % c;
        let dy = upstream.data()[i];
        let xh = cache.normalized.data()[i];
        let term = m * dy - grad_beta.data()[ch] - xh * grad_gamma.data()[ch];
        *g = p.gamma.data()[ch] * cache.inv_std[ch] * term / m;
    }
    Ok((grad_input, grad_gamma, grad_beta))
}
