//! Layers of the recognition network: convolution, batch normalization,
//! ReLU, max pooling, LSTM (uni- and bidirectional) and the per-timestep
//! output projection. Every layer ships its own exact backward pass; there
//! is no tape or graph.

mod batchnorm;
mod conv;
mod dense;
mod lstm;
mod pool;

pub use batchnorm::{batchnorm_backward, batchnorm_infer, batchnorm_train, BnCache};
pub use conv::{conv2d_backward, conv2d_backward_into, conv2d_forward};
pub use dense::{project, project_backward, project_backward_into};
pub use lstm::{
    bidirectional_backward_into, bidirectional_forward, lstm_backward, lstm_backward_into,
    lstm_forward, BiCache, CellGrads, Direction, LstmCache,
};
pub use pool::{maxpool, maxpool_backward};

use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Convolution kernels `[kh, kw, Cin, Cout]` plus a per-output-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Per-channel affine transform and running statistics.
///
/// Running statistics update as `r <- momentum * r + (1 - momentum) * batch`
/// on every training-mode pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: T,
    pub epsilon: T,
}

/// One recurrent cell. Gate blocks are stacked along the first axis in the
/// fixed order (input, forget, cell-candidate, output):
/// `w: [4H, D]`, `u: [4H, H]`, `b: [4H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    pub w: Tensor<T>,
    pub u: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn hidden_size(&self) -> usize {
        self.w.shape()[0] / 4
    }

    pub fn input_size(&self) -> usize {
        self.w.shape()[1]
    }
}

/// Affine map applied independently at every time step:
/// `weight: [O, I]`, `bias: [O]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// max(0, x) pointwise.
pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Passes upstream gradient where the forward input was strictly positive.
/// The subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, upstream: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(input.shape(), upstream.shape());
    let mut out = upstream.clone();
    for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
    out
}

fn uniform_tensor<T: Scalar>(shape: &[usize], scale: f64, rng: &mut SplitMix64) -> Tensor<T> {
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| T::c(rng.uniform_in(-scale, scale)))
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape by construction")
}

/// Kernels from a zero-mean uniform scaled by 1/sqrt(fan-in); zero bias.
pub fn init_conv<T: Scalar>(
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
    rng: &mut SplitMix64,
) -> ConvParams<T> {
    let scale = 1.0 / ((kh * kw * cin) as f64).sqrt();
    ConvParams {
        kernels: uniform_tensor(&[kh, kw, cin, cout], scale, rng),
        bias: Tensor::zeros(&[cout]),
    }
}

pub fn init_batchnorm<T: Scalar>(channels: usize) -> BatchNormParams<T> {
    BatchNormParams {
        gamma: Tensor::full(&[channels], T::one()),
        beta: Tensor::zeros(&[channels]),
        running_mean: Tensor::zeros(&[channels]),
        running_var: Tensor::full(&[channels], T::one()),
        momentum: T::c(0.9),
        epsilon: T::c(1e-5),
    }
}

/// Input and recurrent weights uniform at 1/sqrt(fan-in); biases zero except
/// the forget-gate block, which starts at +1 so early training does not
/// flush the cell state.
pub fn init_lstm<T: Scalar>(input: usize, hidden: usize, rng: &mut SplitMix64) -> LstmParams<T> {
    let w = uniform_tensor(&[4 * hidden, input], 1.0 / (input as f64).sqrt(), rng);
    let u = uniform_tensor(&[4 * hidden, hidden], 1.0 / (hidden as f64).sqrt(), rng);
    let mut b = Tensor::zeros(&[4 * hidden]);
    for slot in &mut b.data_mut()[hidden..2 * hidden] {
        *slot = T::one();
    }
    LstmParams { w, u, b }
}

pub fn init_dense<T: Scalar>(input: usize, output: usize, rng: &mut SplitMix64) -> DenseParams<T> {
    DenseParams {
        weight: uniform_tensor(&[output, input], 1.0 / (input as f64).sqrt(), rng),
        bias: Tensor::zeros(&[output]),
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
