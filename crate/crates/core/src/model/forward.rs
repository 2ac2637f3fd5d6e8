//! End-to-end passes: conv blocks (conv -> batch norm -> ReLU -> max pool),
//! reshape of the final feature map into a width-aligned sequence, the
//! bidirectional stack, and the per-step projection.
//!
//! Per-sample work runs in parallel. Parameter-gradient sums are split over
//! a fixed number of contiguous sample chunks, so every accumulation order
//! is independent of the thread count and results stay bitwise reproducible.

use rayon::prelude::*;

use crate::ctc::best_path_decode;
use crate::dataset::{preprocess_to, GrayImage};
use crate::nn::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, bidirectional_backward_into,
    bidirectional_forward, conv2d_backward_into, conv2d_forward, maxpool,
    maxpool_backward, project, project_backward_into, relu, relu_backward, BiCache, BnCache,
    ConvParams, DenseParams, LstmParams,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{BiLstm, ModelConfig, ModelError, ModelParams, TrainingState};

/// Whether batch statistics are computed (and running statistics updated)
/// or the stored running statistics are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Fixed chunk count for parameter-gradient accumulation.
pub(crate) const GRAD_CHUNKS: usize = 4;

pub(crate) fn chunk_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / GRAD_CHUNKS;
    let extra = n % GRAD_CHUNKS;
    let mut ranges = Vec::with_capacity(GRAD_CHUNKS);
    let mut start = 0;
    for c in 0..GRAD_CHUNKS {
        let len = base + usize::from(c < extra);
        ranges.push(start..start + len);
        start += len;
    }
    ranges
}

fn stack_batch<T: Scalar>(samples: &[Tensor<T>]) -> Tensor<T> {
    let inner = samples[0].shape();
    let mut shape = vec![samples.len()];
    shape.extend_from_slice(inner);
    let mut out = Tensor::zeros(&shape);
    let stride: usize = inner.iter().product();
    for (i, s) in samples.iter().enumerate() {
        out.data_mut()[i * stride..(i + 1) * stride].copy_from_slice(s.data());
    }
    out
}

fn unstack_batch<T: Scalar>(batch: &Tensor<T>) -> Vec<Tensor<T>> {
    let n = batch.shape()[0];
    let inner = &batch.shape()[1..];
    let stride: usize = inner.iter().product();
    (0..n)
        .map(|i| {
            Tensor::from_vec(inner, batch.data()[i * stride..(i + 1) * stride].to_vec())
                .expect("slice length matches inner shape")
        })
        .collect()
}

/// Intermediate activations a training step keeps for the backward pass.
pub(crate) struct BatchCache<T> {
    conv_inputs: Vec<Vec<Tensor<T>>>,   // [block][sample]
    bn_caches: Vec<BnCache<T>>,         // [block]
    bn_outputs: Vec<Tensor<T>>,         // [block], pre-ReLU
    pool_argmax: Vec<Vec<Vec<usize>>>,  // [block][sample]
    pool_input_shapes: Vec<[usize; 3]>, // [block]
    lstm_caches: Vec<Vec<BiCache<T>>>,  // [sample][layer]
    proj_inputs: Vec<Tensor<T>>,        // [sample]
}

fn check_sample_shape<T: Scalar>(config: &ModelConfig, sample: &Tensor<T>) -> Result<(), ModelError> {
    if sample.shape() != [config.input_width, config.input_height] {
        return Err(ModelError::Shape(crate::tensor::ShapeError::Mismatch {
            left: sample.shape().to_vec(),
            right: vec![config.input_width, config.input_height],
            context: "network input extents",
        }));
    }
    Ok(())
}

/// Run the recurrent stack and projection for one sample's sequence.
fn recurrent_forward<T: Scalar>(
    params: &ModelParams<T>,
    seq: Tensor<T>,
) -> Result<(Tensor<T>, Vec<BiCache<T>>, Tensor<T>), ModelError> {
    let mut caches = Vec::with_capacity(params.lstm.len());
    let mut x = seq;
    for layer in &params.lstm {
        let (out, cache) = bidirectional_forward(&x, &layer.fwd, &layer.bwd)?;
        caches.push(cache);
        x = out;
    }
    let logits = project(&x, &params.dense)?;
    Ok((logits, caches, x))
}

/// Training-mode forward over preprocessed `[W, H]` samples. Updates the
/// batch-norm running statistics in `params`.
pub(crate) fn forward_train<T: Scalar>(
    params: &mut ModelParams<T>,
    config: &ModelConfig,
    inputs: &[Tensor<T>],
) -> Result<(Vec<Tensor<T>>, BatchCache<T>), ModelError> {
    for s in inputs {
        check_sample_shape(config, s)?;
    }
    let n = inputs.len();
    let mut xs: Vec<Tensor<T>> = inputs
        .iter()
        .map(|t| {
            t.clone()
                .reshape(&[config.input_width, config.input_height, 1])
                .expect("adding a channel axis preserves length")
        })
        .collect();

    let blocks = config.conv.len();
    let mut cache = BatchCache {
        conv_inputs: Vec::with_capacity(blocks),
        bn_caches: Vec::with_capacity(blocks),
        bn_outputs: Vec::with_capacity(blocks),
        pool_argmax: Vec::with_capacity(blocks),
        pool_input_shapes: Vec::with_capacity(blocks),
        lstm_caches: Vec::with_capacity(n),
        proj_inputs: Vec::with_capacity(n),
    };

    for b in 0..blocks {
        let conv_out: Vec<Tensor<T>> = xs
            .par_iter()
            .map(|x| conv2d_forward(x, &params.conv[b]))
            .collect::<Result<_, _>>()?;
        let batch = stack_batch(&conv_out);
        let (bn_out, bn_cache) = batchnorm_train(&batch, &mut params.bn[b])?;
        let activated = relu(&bn_out);
        let act_samples = unstack_batch(&activated);
        let pooled: Vec<(Tensor<T>, Vec<usize>)> = act_samples
            .par_iter()
            .map(|a| maxpool(a, config.conv[b].pool))
            .collect::<Result<_, _>>()?;

        let shape = act_samples[0].shape();
        cache
            .pool_input_shapes
            .push([shape[0], shape[1], shape[2]]);
        cache.conv_inputs.push(std::mem::take(&mut xs));
        cache.bn_caches.push(bn_cache);
        cache.bn_outputs.push(bn_out);
        let mut argmax = Vec::with_capacity(n);
        xs = pooled
            .into_iter()
            .map(|(t, a)| {
                argmax.push(a);
                t
            })
            .collect();
        cache.pool_argmax.push(argmax);
    }

    let steps = config.sequence_steps();
    let feat = config.sequence_features();
    let rec: Vec<(Tensor<T>, Vec<BiCache<T>>, Tensor<T>)> = xs
        .into_par_iter()
        .map(|x| {
            let seq = x.reshape(&[steps, feat])?;
            recurrent_forward(params, seq)
        })
        .collect::<Result<_, _>>()?;

    let mut logits = Vec::with_capacity(n);
    for (l, caches, proj_in) in rec {
        logits.push(l);
        cache.lstm_caches.push(caches);
        cache.proj_inputs.push(proj_in);
    }
    Ok((logits, cache))
}

/// The data behind per-layer inspection: conv block outputs, the CNN output
/// sequence, per-step logits and their argmax indices.
#[derive(Debug, Clone)]
pub struct ActivationReport<T> {
    pub conv_blocks: Vec<Tensor<T>>,
    pub sequence: Tensor<T>,
    pub logits: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// Inference-mode forward of one sample capturing every stage.
fn infer_with_activations<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    input: &Tensor<T>,
) -> Result<ActivationReport<T>, ModelError> {
    check_sample_shape(config, input)?;
    let mut x = input
        .clone()
        .reshape(&[config.input_width, config.input_height, 1])
        .expect("adding a channel axis preserves length");
    let mut conv_blocks = Vec::with_capacity(config.conv.len());
    for b in 0..config.conv.len() {
        let conv_out = conv2d_forward(&x, &params.conv[b])?;
        // Batch axis of one for the per-channel statistics.
        let mut shape4 = vec![1];
        shape4.extend_from_slice(conv_out.shape());
        let shape3: Vec<usize> = conv_out.shape().to_vec();
        let normalized = batchnorm_infer(&conv_out.reshape(&shape4)?, &params.bn[b])?;
        let activated = relu(&normalized.reshape(&shape3)?);
        let (pooled, _) = maxpool(&activated, config.conv[b].pool)?;
        conv_blocks.push(pooled.clone());
        x = pooled;
    }
    let steps = config.sequence_steps();
    let feat = config.sequence_features();
    let sequence = x.reshape(&[steps, feat])?;
    let (logits, _, _) = recurrent_forward(params, sequence.clone())?;
    let classes = config.logit_classes();
    let argmax = logits
        .data()
        .chunks(classes)
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    Ok(ActivationReport {
        conv_blocks,
        sequence,
        logits,
        argmax,
    })
}

/// Forward a batch `[N, W, H]` to logits `[N, steps, classes]`.
///
/// Train mode computes batch statistics (and so updates the running
/// statistics); infer mode is deterministic and touches nothing.
pub fn forward<T: Scalar>(
    state: &mut TrainingState<T>,
    batch: &Tensor<T>,
    mode: Mode,
) -> Result<Tensor<T>, ModelError> {
    if batch.rank() != 3 {
        return Err(ModelError::Shape(crate::tensor::ShapeError::Mismatch {
            left: batch.shape().to_vec(),
            right: vec![0, state.config.input_width, state.config.input_height],
            context: "forward expects [N, W, H]",
        }));
    }
    let samples = unstack_batch(batch);
    let logits = match mode {
        Mode::Train => forward_train(&mut state.params, &state.config, &samples)?.0,
        Mode::Infer => samples
            .par_iter()
            .map(|s| {
                infer_with_activations(&state.params, &state.config, s).map(|r| r.logits)
            })
            .collect::<Result<_, _>>()?,
    };
    Ok(stack_batch(&logits))
}

/// Recognize one raw image: preprocess, infer, best-path decode, map
/// through the vocabulary.
pub fn recognize<T: Scalar>(
    state: &TrainingState<T>,
    img: &GrayImage,
) -> Result<String, ModelError> {
    let input = preprocess_to::<T>(img, state.config.input_width, state.config.input_height);
    let report = infer_with_activations(&state.params, &state.config, &input)?;
    let decoded = best_path_decode(&report.logits);
    Ok(state.vocab.decode(&decoded))
}

/// Per-layer activations of one image under the current parameters.
pub fn inspect_activations<T: Scalar>(
    state: &TrainingState<T>,
    img: &GrayImage,
) -> Result<ActivationReport<T>, ModelError> {
    let input = preprocess_to::<T>(img, state.config.input_width, state.config.input_height);
    infer_with_activations(&state.params, &state.config, &input)
}

/// Backpropagate per-sample logit gradients through the whole network,
/// accumulating parameter gradients into `grads`.
pub(crate) fn backward_batch<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    cache: &BatchCache<T>,
    grad_logits: &[Tensor<T>],
    grads: &mut ModelParams<T>,
) -> Result<(), ModelError> {
    let n = grad_logits.len();
    let steps = config.sequence_steps();
    let feat = config.sequence_features();
    let ranges = chunk_ranges(n);

    // Recurrent stack, chunk-parallel. Each chunk accumulates into its own
    // dense/lstm gradients; chunks merge in fixed order afterwards.
    struct RecPartial<T> {
        dense: DenseParams<T>,
        lstm: Vec<BiLstm<T>>,
        dxs: Vec<Tensor<T>>,
    }
    let partials: Vec<RecPartial<T>> = ranges
        .par_iter()
        .map(|range| -> Result<RecPartial<T>, ModelError> {
            let zero_lstm = |p: &LstmParams<T>| LstmParams {
                w: Tensor::zeros(p.w.shape()),
                u: Tensor::zeros(p.u.shape()),
                b: Tensor::zeros(p.b.shape()),
            };
            let mut partial = RecPartial {
                dense: DenseParams {
                    weight: Tensor::zeros(params.dense.weight.shape()),
                    bias: Tensor::zeros(params.dense.bias.shape()),
                },
                lstm: params
                    .lstm
                    .iter()
                    .map(|l| BiLstm {
                        fwd: zero_lstm(&l.fwd),
                        bwd: zero_lstm(&l.bwd),
                    })
                    .collect(),
                dxs: Vec::with_capacity(range.len()),
            };
            for i in range.clone() {
                let mut d = project_backward_into(
                    &cache.proj_inputs[i],
                    &params.dense,
                    &grad_logits[i],
                    &mut partial.dense.weight,
                    &mut partial.dense.bias,
                )?;
                for (l, layer) in params.lstm.iter().enumerate().rev() {
                    let pl = &mut partial.lstm[l];
                    d = bidirectional_backward_into(
                        &layer.fwd,
                        &layer.bwd,
                        &cache.lstm_caches[i][l],
                        &d,
                        (&mut pl.fwd.w, &mut pl.fwd.u, &mut pl.fwd.b),
                        (&mut pl.bwd.w, &mut pl.bwd.u, &mut pl.bwd.b),
                    )?;
                }
                partial.dxs.push(d.reshape(&[steps, 1, feat])?);
            }
            Ok(partial)
        })
        .collect::<Result<_, _>>()?;

    let mut dpool: Vec<Tensor<T>> = Vec::with_capacity(n);
    for partial in partials {
        grads.dense.weight.add_assign(&partial.dense.weight)?;
        grads.dense.bias.add_assign(&partial.dense.bias)?;
        for (gl, pl) in grads.lstm.iter_mut().zip(&partial.lstm) {
            gl.fwd.w.add_assign(&pl.fwd.w)?;
            gl.fwd.u.add_assign(&pl.fwd.u)?;
            gl.fwd.b.add_assign(&pl.fwd.b)?;
            gl.bwd.w.add_assign(&pl.bwd.w)?;
            gl.bwd.u.add_assign(&pl.bwd.u)?;
            gl.bwd.b.add_assign(&pl.bwd.b)?;
        }
        dpool.extend(partial.dxs);
    }

    // Conv blocks, top down.
    for b in (0..config.conv.len()).rev() {
        let shape = cache.pool_input_shapes[b];
        let dact: Vec<Tensor<T>> = dpool
            .par_iter()
            .enumerate()
            .map(|(i, d)| maxpool_backward(&shape, &cache.pool_argmax[b][i], d))
            .collect::<Result<_, _>>()?;
        let dact_batch = stack_batch(&dact);
        let dbn_out = relu_backward(&cache.bn_outputs[b], &dact_batch);
        let (dbn_in, dgamma, dbeta) = batchnorm_backward(&cache.bn_caches[b], &params.bn[b], &dbn_out)?;
        grads.bn[b].gamma.add_assign(&dgamma)?;
        grads.bn[b].beta.add_assign(&dbeta)?;

        let dconv_out = unstack_batch(&dbn_in);
        let conv_partials: Vec<(ConvParams<T>, Vec<Tensor<T>>)> = ranges
            .par_iter()
            .map(|range| -> Result<(ConvParams<T>, Vec<Tensor<T>>), ModelError> {
                let mut gk = Tensor::zeros(params.conv[b].kernels.shape());
                let mut gb = Tensor::zeros(params.conv[b].bias.shape());
                let mut dxs = Vec::with_capacity(range.len());
                for i in range.clone() {
                    dxs.push(conv2d_backward_into(
                        &cache.conv_inputs[b][i],
                        &params.conv[b],
                        &dconv_out[i],
                        &mut gk,
                        &mut gb,
                    )?);
                }
                Ok((ConvParams { kernels: gk, bias: gb }, dxs))
            })
            .collect::<Result<_, _>>()?;

        dpool = Vec::with_capacity(n);
        for (partial, dxs) in conv_partials {
            grads.conv[b].kernels.add_assign(&partial.kernels)?;
            grads.conv[b].bias.add_assign(&partial.bias)?;
            dpool.extend(dxs);
        }
    }
    Ok(())
}
