//! Mini-batch training: CTC gradients through the whole stack, RMSProp
//! updates, epoch-wise validation and best-model tracking.
//!
//! All randomness (epoch shuffles) derives from the master seed and the
//! iteration counter, so a resumed run walks the exact same batches as an
//! uninterrupted one.

use rayon::prelude::*;

use crate::ctc::{ctc_loss, LabelSequence};
use crate::dataset::{preprocess_to, GrayImage, Repository, SplitIndices};
use crate::metrics::evaluate_dataset;
use crate::rng::{stream_seed, SplitMix64};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::forward::{backward_batch, forward_train};
use super::{ModelError, ModelParams, TrainingState};

const SHUFFLE_DOMAIN: u64 = 0x73687566; // "shuf"

/// One RMSProp step over every trainable tensor:
/// `s <- rho*s + (1-rho)*g^2; p <- p - lr*g / (sqrt(s) + eps)`.
fn rmsprop_update<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    acc: &mut ModelParams<T>,
    lr: f64,
    rho: f64,
    eps: f64,
) {
    let lr = T::c(lr);
    let rho = T::c(rho);
    let eps = T::c(eps);
    let one_minus_rho = T::one() - rho;
    let gs = grads.named_tensors(false);
    let mut ss = acc.named_tensors_mut(false);
    for (((_, p), (_, g)), (_, s)) in params
        .named_tensors_mut(false)
        .into_iter()
        .zip(gs)
        .zip(ss.iter_mut())
    {
        for ((pv, &gv), sv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(s.data_mut().iter_mut())
        {
            *sv = rho * *sv + one_minus_rho * gv * gv;
            *pv -= lr * gv / (sv.sqrt() + eps);
        }
    }
}

/// Mean CTC loss of a batch and its full parameter gradient, with no
/// optimizer update. Train-mode forward, so the batch-norm running
/// statistics do advance. Errors identify the offending batch position.
pub fn loss_gradients<T: Scalar>(
    state: &mut TrainingState<T>,
    images: &[GrayImage],
    labels: &[LabelSequence],
) -> Result<(T, ModelParams<T>), ModelError> {
    assert_eq!(images.len(), labels.len());
    assert!(!images.is_empty());
    let n = images.len();

    let inputs: Vec<Tensor<T>> = images.par_iter().map(|img| preprocess_to(img, state.config.input_width, state.config.input_height)).collect();
    let (logits, cache) = forward_train(&mut state.params, &state.config, &inputs)?;

    let scale = T::c(1.0 / n as f64);
    let mut total = T::zero();
    let mut grad_logits = Vec::with_capacity(n);
    for (i, (lg, label)) in logits.iter().zip(labels).enumerate() {
        let r = ctc_loss(lg, label).map_err(|source| ModelError::Record { record: i, source })?;
        total += r.loss;
        grad_logits.push(r.grad_logits.scale(scale));
    }

    let mut grads = state.params.zeros_like();
    backward_batch(&state.params, &state.config, &cache, &grad_logits, &mut grads)?;
    Ok((total * scale, grads))
}

/// Run one optimization step over a batch of raw images and their labels.
/// Returns the mean CTC loss. Errors identify the offending batch position.
pub fn train_step<T: Scalar>(
    state: &mut TrainingState<T>,
    images: &[GrayImage],
    labels: &[LabelSequence],
) -> Result<T, ModelError> {
    let (loss, grads) = loss_gradients(state, images, labels)?;
    rmsprop_update(
        &mut state.params,
        &grads,
        &mut state.opt,
        state.hyper.learning_rate,
        state.hyper.rho,
        state.hyper.epsilon,
    );
    state.iteration += 1;
    Ok(loss)
}

/// Validation record of one completed epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: u64,
    pub end_iteration: u64,
    pub mean_loss: f64,
    pub val_crr: f64,
    pub val_wrr: f64,
}

/// Result of a [`train`] run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Mean CTC loss of every iteration, in order.
    pub losses: Vec<f64>,
    /// One entry per completed epoch (validation split evaluated each time).
    pub epochs: Vec<EpochStats>,
    /// Snapshot of the state at the best validation CRR seen, if any epoch
    /// completed.
    pub best: Option<Box<TrainingState<T>>>,
    pub best_crr: f64,
}

fn epoch_permutation(seed: u64, epoch: u64, train: &[usize]) -> Vec<usize> {
    let mut order = train.to_vec();
    SplitMix64::new(stream_seed(stream_seed(seed, SHUFFLE_DOMAIN), epoch)).shuffle(&mut order);
    order
}

/// Train for `iterations` steps over shuffled mini-batches of the training
/// split, evaluating the validation split at every epoch boundary.
pub fn train<T: Scalar>(
    state: &mut TrainingState<T>,
    repo: &Repository,
    split: &SplitIndices,
    iterations: u64,
) -> Result<TrainOutcome<T>, ModelError> {
    if split.train.is_empty() {
        return Err(ModelError::Metrics("empty training split".into()));
    }
    let batch = state.hyper.batch_size.max(1);
    let per_epoch = split.train.len().div_ceil(batch) as u64;

    let mut outcome = TrainOutcome {
        losses: Vec::with_capacity(iterations as usize),
        epochs: Vec::new(),
        best: None,
        best_crr: f64::NEG_INFINITY,
    };
    let mut epoch_losses: Vec<f64> = Vec::new();
    let mut current_epoch = state.iteration / per_epoch;
    let mut order = epoch_permutation(state.seed, current_epoch, &split.train);

    for _ in 0..iterations {
        let epoch = state.iteration / per_epoch;
        if epoch != current_epoch {
            current_epoch = epoch;
            order = epoch_permutation(state.seed, epoch, &split.train);
        }
        let pos = (state.iteration % per_epoch) as usize;
        let ids = &order[pos * batch..((pos + 1) * batch).min(order.len())];

        let mut images = Vec::with_capacity(ids.len());
        let mut labels = Vec::with_capacity(ids.len());
        for &rec in ids {
            images.push(repo.image(rec)?);
            let word = &repo.records()[rec].word;
            let indices = state.vocab.encode(word).map_err(|symbol| {
                ModelError::Dataset(crate::dataset::DatasetError::OutOfVocabulary {
                    word: word.clone(),
                    symbol,
                })
            })?;
            labels.push(
                LabelSequence::new(indices, state.vocab.size())
                    .map_err(|source| ModelError::Record { record: rec, source })?,
            );
        }

        let loss = train_step(state, &images, &labels).map_err(|e| match e {
            // Rewrap batch positions as repository record indices.
            ModelError::Record { record, source } => ModelError::Record {
                record: ids[record],
                source,
            },
            other => other,
        })?;
        let loss = loss.as_f64();
        outcome.losses.push(loss);
        epoch_losses.push(loss);

        if state.iteration.is_multiple_of(per_epoch) && !split.validate.is_empty() {
            let report = evaluate_dataset(state, repo, &split.validate, "validate")?;
            let stats = EpochStats {
                epoch: current_epoch,
                end_iteration: state.iteration,
                mean_loss: epoch_losses.iter().sum::<f64>() / epoch_losses.len() as f64,
                val_crr: report.crr,
                val_wrr: report.wrr,
            };
            epoch_losses.clear();
            if stats.val_crr > outcome.best_crr {
                outcome.best_crr = stats.val_crr;
                outcome.best = Some(Box::new(state.clone()));
            }
            outcome.epochs.push(stats);
        }
    }
    Ok(outcome)
}
