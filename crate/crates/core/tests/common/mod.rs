//! Shared test oracles: central finite differences, exhaustive CTC path
//! enumeration, and small fixture builders. Everything here checks forward
//! passes only, staying independent of the analytic backward code it is
//! used to verify.

#![allow(dead_code)]

pub mod gradcheck;

use qocr_core::ctc::LabelSequence;
use qocr_core::dataset::{generate_samples, sample_words, RendererConfig, Repository};
use qocr_core::model::{ConvSpec, ModelConfig, Vocabulary};
use qocr_core::rng::SplitMix64;
use qocr_core::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// Relative error with a floor so near-zero gradient pairs compare sanely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central-difference gradient via a probe closure.
///
/// `probe(k, delta)` must evaluate the scalar objective with slot `k`
/// temporarily shifted by `delta`, restoring the original value before
/// returning.
pub fn central_difference(len: usize, mut probe: impl FnMut(usize, f64) -> f64) -> Vec<f64> {
    (0..len)
        .map(|k| (probe(k, FD_STEP) - probe(k, -FD_STEP)) / (2.0 * FD_STEP))
        .collect()
}

/// Compare an analytic gradient against central differences, returning the
/// worst relative error.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

pub fn random_tensor(shape: &[usize], rng: &mut SplitMix64) -> Tensor<f64> {
    let len: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).unwrap()
}

/// Exhaustive CTC reference: enumerate every frame path, collapse it, and
/// sum the probabilities of those matching the label. Exponential in T.
pub fn ctc_brute_force(logits: &Tensor<f64>, label: &[usize]) -> f64 {
    let steps = logits.shape()[0];
    let classes = logits.shape()[1];
    let blank = classes - 1;

    // Row-wise softmax.
    let mut probs = vec![vec![0.0; classes]; steps];
    for (t, slot) in probs.iter_mut().enumerate() {
        let row: Vec<f64> = (0..classes).map(|k| logits.at(&[t, k])).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
        for (k, p) in slot.iter_mut().enumerate() {
            *p = (row[k] - max).exp() / denom;
        }
    }

    let mut total = 0.0;
    let paths = classes.pow(steps as u32);
    for code in 0..paths {
        let mut c = code;
        let mut p = 1.0;
        let mut collapsed = Vec::new();
        let mut prev = usize::MAX;
        for row in &probs {
            let k = c % classes;
            c /= classes;
            p *= row[k];
            if k != prev && k != blank {
                collapsed.push(k);
            }
            prev = k;
        }
        if collapsed == label {
            total += p;
        }
    }
    total
}

/// Random CTC-feasible label of length `len` over `vocab` symbols.
pub fn feasible_label(len: usize, vocab: usize, steps: usize, rng: &mut SplitMix64) -> LabelSequence {
    loop {
        let symbols: Vec<usize> = (0..len).map(|_| rng.below(vocab)).collect();
        let label = LabelSequence::new(symbols, vocab).unwrap();
        if label.feasible_in(steps) {
            return label;
        }
    }
}

/// A deliberately tiny network for end-to-end gradient checks: 16x8 input,
/// two conv blocks, short sequence, small vocabulary.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        input_width: 16,
        input_height: 8,
        conv: vec![
            ConvSpec {
                kernel: (3, 3),
                filters: 3,
                pool: (2, 2),
            },
            ConvSpec {
                kernel: (3, 3),
                filters: 4,
                pool: (2, 4),
            },
        ],
        lstm_hidden: 5,
        lstm_layers: 2,
        vocab_size: 3,
    }
}

/// Vocabulary of `n` ASCII symbols for toy datasets.
pub fn ascii_vocab(n: usize) -> Vocabulary {
    Vocabulary::new(('a'..).take(n).collect()).unwrap()
}

/// Synthetic toy dataset: `words` unique words of 7..=10 symbols rendered
/// in `fonts` synthetic fonts.
pub fn toy_repository(words: usize, fonts: u32, vocab: &Vocabulary, seed: u64) -> Repository {
    let word_list = sample_words(words, 7, 10, vocab, seed);
    let cfg = RendererConfig::new(vocab.clone(), seed);
    let font_ids: Vec<u32> = (0..fonts).collect();
    generate_samples(&word_list, &font_ids, &cfg).unwrap()
}
