//! Segmentation-free recognition of single-word images.
//!
//! The pipeline is a five-block convolutional feature extractor feeding a
//! two-layer bidirectional LSTM, trained end to end with a CTC loss and
//! decoded greedily. Around the network the crate ships the pieces a
//! desk-scale experiment needs: a packed binary dataset container, a
//! deterministic synthetic word renderer, salt-and-pepper / speckle noise
//! transforms, dataset splitting, CRR/WRR evaluation and bit-exact
//! checkpoints.
//!
//! All numeric code is generic over the scalar type ([`Scalar`], `f32` or
//! `f64`); the aliases below pin the two concrete instantiations. Training
//! and checkpoints default to double precision.

pub mod ctc;
pub mod dataset;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use scalar::Scalar;

/// Single-precision tensor.
pub type Tensor32 = tensor::Tensor<f32>;
/// Double-precision tensor, the default carrier for parameters and gradients.
pub type Tensor64 = tensor::Tensor<f64>;

/// Single-precision model parameters.
pub type ModelParams32 = model::ModelParams<f32>;
/// Double-precision model parameters.
pub type ModelParams64 = model::ModelParams<f64>;

/// Single-precision training state.
pub type TrainingState32 = model::TrainingState<f32>;
/// Double-precision training state, what the CLI builds and checkpoints.
pub type TrainingState64 = model::TrainingState<f64>;
