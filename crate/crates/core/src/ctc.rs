//! Connectionist temporal classification: alignment-summing loss, its
//! analytic gradient with respect to pre-softmax logits, and greedy
//! decoding.
//!
//! The blank class always sits at the last logit column (index `V` for a
//! vocabulary of `V` symbols), so label files never mention it. All alpha /
//! beta recursions run in log space with log-sum-exp; a probability-space
//! version underflows already at 32 steps.

use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CtcError {
    #[error("label symbol {symbol} is outside the vocabulary (size {vocab})")]
    InvalidSymbol { symbol: usize, vocab: usize },
    #[error(
        "label of length {label_len} with {repeats} adjacent repeats cannot be \
         emitted in {steps} steps (needs at least {})", label_len + repeats
    )]
    Infeasible {
        label_len: usize,
        repeats: usize,
        steps: usize,
    },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// A validated target: vocabulary indices, blank excluded by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence {
    symbols: Vec<usize>,
}

impl LabelSequence {
    /// Validate indices against a vocabulary of `vocab_size` symbols.
    pub fn new(symbols: Vec<usize>, vocab_size: usize) -> Result<Self, CtcError> {
        if let Some(&bad) = symbols.iter().find(|&&s| s >= vocab_size) {
            return Err(CtcError::InvalidSymbol {
                symbol: bad,
                vocab: vocab_size,
            });
        }
        Ok(Self { symbols })
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Count of adjacent equal symbol pairs; each needs a separating blank.
    pub fn adjacent_repeats(&self) -> usize {
        self.symbols.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// An alignment of length `steps` exists iff
    /// `steps >= len + adjacent_repeats`.
    pub fn feasible_in(&self, steps: usize) -> bool {
        steps >= self.len() + self.adjacent_repeats()
    }
}

/// Loss and logit gradient of one (logits, label) pair.
#[derive(Debug, Clone)]
pub struct CtcResult<T> {
    /// Negative log probability of the label under the logits.
    pub loss: T,
    /// Gradient with respect to the pre-softmax logits, `[T, V+1]`.
    pub grad_logits: Tensor<T>,
}

#[inline]
fn log_sum_exp2<T: Scalar>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[inline]
fn log_sum_exp3<T: Scalar>(a: T, b: T, c: T) -> T {
    log_sum_exp2(log_sum_exp2(a, b), c)
}

/// Row-wise log-softmax of `[T, K]` logits.
fn log_softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let k = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for v in row.iter() {
            sum += (*v - max).exp();
        }
        let lse = max + sum.ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// Blanks interleaved around and between the label symbols; length 2L+1.
/// `None` marks a blank slot.
fn extended_label(label: &LabelSequence) -> Vec<Option<usize>> {
    let mut ext = Vec::with_capacity(2 * label.len() + 1);
    ext.push(None);
    for &s in label.symbols() {
        ext.push(Some(s));
        ext.push(None);
    }
    ext
}

/// Negative log probability of `label` under `logits` (shape `[T, V+1]`,
/// blank last) and its gradient with respect to the logits.
pub fn ctc_loss<T: Scalar>(
    logits: &Tensor<T>,
    label: &LabelSequence,
) -> Result<CtcResult<T>, CtcError> {
    if logits.rank() != 2 || logits.shape()[1] < 2 {
        return Err(CtcError::Shape(ShapeError::Mismatch {
            left: logits.shape().to_vec(),
            right: vec![],
            context: "ctc logits must be [T, V+1]",
        }));
    }
    let steps = logits.shape()[0];
    let classes = logits.shape()[1];
    let blank = classes - 1;
    if let Some(&bad) = label.symbols().iter().find(|&&s| s >= blank) {
        return Err(CtcError::InvalidSymbol {
            symbol: bad,
            vocab: blank,
        });
    }
    if !label.feasible_in(steps) {
        return Err(CtcError::Infeasible {
            label_len: label.len(),
            repeats: label.adjacent_repeats(),
            steps,
        });
    }

    let lp = log_softmax(logits);
    let ext = extended_label(label);
    let s_len = ext.len();
    let class_of = |s: usize| ext[s].unwrap_or(blank);
    let ninf = T::neg_infinity();

    // Forward variables, alpha[t][s] = log P(prefix paths ending in state s
    // at step t), emission at t included.
    let mut alpha = vec![ninf; steps * s_len];
    alpha[0] = lp.at(&[0, blank]);
    if s_len > 1 {
        alpha[1] = lp.at(&[0, class_of(1)]);
    }
    for t in 1..steps {
        for s in 0..s_len {
            let stay = alpha[(t - 1) * s_len + s];
            let step1 = if s >= 1 {
                alpha[(t - 1) * s_len + s - 1]
            } else {
                ninf
            };
            let skip = if s >= 2 && ext[s].is_some() && ext[s] != ext[s - 2] {
                alpha[(t - 1) * s_len + s - 2]
            } else {
                ninf
            };
            let prev = log_sum_exp3(stay, step1, skip);
            alpha[t * s_len + s] = if prev == ninf {
                ninf
            } else {
                prev + lp.at(&[t, class_of(s)])
            };
        }
    }
    let log_p = if s_len > 1 {
        log_sum_exp2(
            alpha[(steps - 1) * s_len + s_len - 1],
            alpha[(steps - 1) * s_len + s_len - 2],
        )
    } else {
        alpha[(steps - 1) * s_len]
    };

    // Backward variables, beta[t][s] = log P(suffix paths starting in state
    // s at step t), emission at t included.
    let mut beta = vec![ninf; steps * s_len];
    beta[(steps - 1) * s_len + s_len - 1] = lp.at(&[steps - 1, blank]);
    if s_len > 1 {
        beta[(steps - 1) * s_len + s_len - 2] = lp.at(&[steps - 1, class_of(s_len - 2)]);
    }
    for t in (0..steps - 1).rev() {
        for s in 0..s_len {
            let stay = beta[(t + 1) * s_len + s];
            let step1 = if s + 1 < s_len {
                beta[(t + 1) * s_len + s + 1]
            } else {
                ninf
            };
            let skip = if s + 2 < s_len && ext[s + 2].is_some() && ext[s + 2] != ext[s] {
                beta[(t + 1) * s_len + s + 2]
            } else {
                ninf
            };
            let next = log_sum_exp3(stay, step1, skip);
            beta[t * s_len + s] = if next == ninf {
                ninf
            } else {
                next + lp.at(&[t, class_of(s)])
            };
        }
    }

    // d loss / d logit[t][k] = softmax[t][k] - P(paths through states of
    // class k at t) / P(label). alpha + beta double-counts the emission at
    // t, hence the lp subtraction.
    let mut grad = Tensor::zeros(&[steps, classes]);
    for t in 0..steps {
        let mut per_class = vec![ninf; classes];
        for s in 0..s_len {
            let a = alpha[t * s_len + s];
            let b = beta[t * s_len + s];
            if a == ninf || b == ninf {
                continue;
            }
            let k = class_of(s);
            per_class[k] = log_sum_exp2(per_class[k], a + b - lp.at(&[t, k]));
        }
        for (k, &class_total) in per_class.iter().enumerate() {
            let y = lp.at(&[t, k]).exp();
            let occupancy = if class_total == ninf {
                T::zero()
            } else {
                (class_total - log_p).exp()
            };
            grad.set(&[t, k], y - occupancy);
        }
    }

    Ok(CtcResult {
        loss: -log_p,
        grad_logits: grad,
    })
}

/// Collapse a frame path: merge adjacent repeats, then drop blanks.
pub fn collapse_path(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Greedy decoding: per-step argmax (ties to the lowest index), collapse
/// adjacent repeats, delete blanks.
pub fn best_path_decode<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    debug_assert_eq!(logits.rank(), 2);
    let classes = logits.shape()[1];
    let blank = classes - 1;
    let path: Vec<usize> = logits
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
    collapse_path(&path, blank)
}
