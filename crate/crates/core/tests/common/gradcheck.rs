//! Finite-difference gradient checks for every layer and for the assembled
//! network. Each function runs one seeded instance and returns the worst
//! relative error between the analytic backward pass and central
//! differences.

#![allow(dead_code)]

use qocr_core::ctc::ctc_loss;
use qocr_core::dataset::GrayImage;
use qocr_core::model::{build_model, loss_gradients, ModelParams, TrainingState, Vocabulary};
use qocr_core::nn::{
    batchnorm_backward, batchnorm_train, bidirectional_backward_into, bidirectional_forward,
    conv2d_backward, conv2d_forward, init_batchnorm, init_lstm, lstm_backward, lstm_forward,
    maxpool, maxpool_backward, project, project_backward, ConvParams, DenseParams, Direction,
    LstmParams,
};
use qocr_core::rng::SplitMix64;
use qocr_core::tensor::Tensor;

use super::{central_difference, max_rel_err, random_tensor, tiny_config};

/// Weighted-sum objective over a forward output; the weights act as the
/// upstream gradient.
fn weighted_sum(out: &Tensor<f64>, weights: &[f64]) -> f64 {
    out.data().iter().zip(weights).map(|(a, w)| a * w).sum()
}

/// Shift-evaluate-restore over one tensor slot.
fn probe_tensor(t: &mut Tensor<f64>, k: usize, delta: f64, loss: impl FnOnce(&Tensor<f64>) -> f64) -> f64 {
    let orig = t.data()[k];
    t.data_mut()[k] = orig + delta;
    let v = loss(t);
    t.data_mut()[k] = orig;
    v
}

pub fn check_conv(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let input = random_tensor(&[4, 3, 2], &mut rng);
    let p = ConvParams {
        kernels: random_tensor(&[3, 3, 2, 2], &mut rng),
        bias: random_tensor(&[2], &mut rng),
    };
    let weights: Vec<f64> = (0..4 * 3 * 2).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let upstream = Tensor::from_vec(&[4, 3, 2], weights.clone()).unwrap();
    let (gi, gk, gb) = conv2d_backward(&input, &p, &upstream).unwrap();
    let mut worst: f64 = 0.0;

    let mut kernels = p.kernels.clone();
    let numeric = central_difference(gk.len(), |k, d| {
        probe_tensor(&mut kernels, k, d, |t| {
            let p2 = ConvParams { kernels: t.clone(), bias: p.bias.clone() };
            weighted_sum(&conv2d_forward(&input, &p2).unwrap(), &weights)
        })
    });
    worst = worst.max(max_rel_err(gk.data(), &numeric));

    let mut bias = p.bias.clone();
    let numeric = central_difference(gb.len(), |k, d| {
        probe_tensor(&mut bias, k, d, |t| {
            let p2 = ConvParams { kernels: p.kernels.clone(), bias: t.clone() };
            weighted_sum(&conv2d_forward(&input, &p2).unwrap(), &weights)
        })
    });
    worst = worst.max(max_rel_err(gb.data(), &numeric));

    let mut inp = input.clone();
    let numeric = central_difference(gi.len(), |k, d| {
        probe_tensor(&mut inp, k, d, |t| {
            weighted_sum(&conv2d_forward(t, &p).unwrap(), &weights)
        })
    });
    worst = worst.max(max_rel_err(gi.data(), &numeric));
    worst
}

pub fn check_batchnorm(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let shape = [3, 2, 2, 2];
    let input = random_tensor(&shape, &mut rng);
    let mut p = init_batchnorm::<f64>(2);
    p.gamma = random_tensor(&[2], &mut rng).map(|v| v + 1.5);
    p.beta = random_tensor(&[2], &mut rng);
    let weights: Vec<f64> = (0..input.len()).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let upstream = Tensor::from_vec(&shape, weights.clone()).unwrap();

    let (_, cache) = batchnorm_train(&input, &mut p.clone()).unwrap();
    let (gi, gg, gb) = batchnorm_backward(&cache, &p, &upstream).unwrap();
    let train_loss = |input: &Tensor<f64>, p: &qocr_core::nn::BatchNormParams<f64>| {
        let (out, _) = batchnorm_train(input, &mut p.clone()).unwrap();
        weighted_sum(&out, &weights)
    };
    let mut worst: f64 = 0.0;

    let mut inp = input.clone();
    let numeric = central_difference(gi.len(), |k, d| {
        probe_tensor(&mut inp, k, d, |t| train_loss(t, &p))
    });
    worst = worst.max(max_rel_err(gi.data(), &numeric));

    let mut gamma = p.gamma.clone();
    let numeric = central_difference(gg.len(), |k, d| {
        probe_tensor(&mut gamma, k, d, |t| {
            let mut p2 = p.clone();
            p2.gamma = t.clone();
            train_loss(&input, &p2)
        })
    });
    worst = worst.max(max_rel_err(gg.data(), &numeric));

    let mut beta = p.beta.clone();
    let numeric = central_difference(gb.len(), |k, d| {
        probe_tensor(&mut beta, k, d, |t| {
            let mut p2 = p.clone();
            p2.beta = t.clone();
            train_loss(&input, &p2)
        })
    });
    worst = worst.max(max_rel_err(gb.data(), &numeric));
    worst
}

pub fn check_maxpool(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    // Re-draw until every window has clearly separated values; finite
    // differences are meaningless across argmax ties.
    let input = loop {
        let t = random_tensor(&[4, 4, 2], &mut rng);
        let (_, argmax) = maxpool(&t, (2, 2)).unwrap();
        let mut ok = true;
        for (slot, &off) in argmax.iter().enumerate() {
            let ox = slot / (2 * 2);
            let oy = (slot / 2) % 2;
            let c = slot % 2;
            let best = t.data()[off];
            for dx in 0..2 {
                for dy in 0..2 {
                    let o = ((ox * 2 + dx) * 4 + (oy * 2 + dy)) * 2 + c;
                    if o != off && (best - t.data()[o]).abs() < 1e-3 {
                        ok = false;
                    }
                }
            }
        }
        if ok {
            break t;
        }
    };
    let weights: Vec<f64> = (0..2 * 2 * 2).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let (_, argmax) = maxpool(&input, (2, 2)).unwrap();
    let upstream = Tensor::from_vec(&[2, 2, 2], weights.clone()).unwrap();
    let gi = maxpool_backward(input.shape(), &argmax, &upstream).unwrap();

    let mut inp = input.clone();
    let numeric = central_difference(gi.len(), |k, d| {
        probe_tensor(&mut inp, k, d, |t| {
            let (out, _) = maxpool(t, (2, 2)).unwrap();
            weighted_sum(&out, &weights)
        })
    });
    max_rel_err(gi.data(), &numeric)
}

pub fn check_lstm(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let (t, d, h) = (4, 2, 3);
    let seq = random_tensor(&[t, d], &mut rng);
    let p: LstmParams<f64> = init_lstm(d, h, &mut SplitMix64::new(seed ^ 0xABCD));
    let weights: Vec<f64> = (0..t * h).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let upstream = Tensor::from_vec(&[t, h], weights.clone()).unwrap();

    let dir = if seed.is_multiple_of(2) {
        Direction::Forward
    } else {
        Direction::Backward
    };
    let (_, cache) = lstm_forward(&seq, &p, dir).unwrap();
    let (gseq, gw, gu, gb) = lstm_backward(&p, &cache, &upstream).unwrap();
    let fwd_loss = |seq: &Tensor<f64>, p: &LstmParams<f64>| {
        let (out, _) = lstm_forward(seq, p, dir).unwrap();
        weighted_sum(&out, &weights)
    };
    let mut worst: f64 = 0.0;

    for (analytic, which) in [(&gw, 0usize), (&gu, 1), (&gb, 2)] {
        let mut pp = p.clone();
        let numeric = central_difference(analytic.len(), |k, d| {
            let tref = match which {
                0 => &mut pp.w,
                1 => &mut pp.u,
                _ => &mut pp.b,
            };
            let orig = tref.data()[k];
            tref.data_mut()[k] = orig + d;
            let v = fwd_loss(&seq, &pp);
            let tref = match which {
                0 => &mut pp.w,
                1 => &mut pp.u,
                _ => &mut pp.b,
            };
            tref.data_mut()[k] = orig;
            v
        });
        worst = worst.max(max_rel_err(analytic.data(), &numeric));
    }

    let mut s = seq.clone();
    let numeric = central_difference(gseq.len(), |k, d| {
        probe_tensor(&mut s, k, d, |t| fwd_loss(t, &p))
    });
    worst = worst.max(max_rel_err(gseq.data(), &numeric));
    worst
}

pub fn check_bidirectional(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let (t, d, h) = (3, 2, 2);
    let seq = random_tensor(&[t, d], &mut rng);
    let fwd: LstmParams<f64> = init_lstm(d, h, &mut SplitMix64::new(seed ^ 0x11));
    let bwd: LstmParams<f64> = init_lstm(d, h, &mut SplitMix64::new(seed ^ 0x22));
    let weights: Vec<f64> = (0..t * 2 * h).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let upstream = Tensor::from_vec(&[t, 2 * h], weights.clone()).unwrap();

    let (_, cache) = bidirectional_forward(&seq, &fwd, &bwd).unwrap();
    let mut gf = (
        Tensor::zeros(fwd.w.shape()),
        Tensor::zeros(fwd.u.shape()),
        Tensor::zeros(fwd.b.shape()),
    );
    let mut gb = (
        Tensor::zeros(bwd.w.shape()),
        Tensor::zeros(bwd.u.shape()),
        Tensor::zeros(bwd.b.shape()),
    );
    let gseq = bidirectional_backward_into(
        &fwd,
        &bwd,
        &cache,
        &upstream,
        (&mut gf.0, &mut gf.1, &mut gf.2),
        (&mut gb.0, &mut gb.1, &mut gb.2),
    )
    .unwrap();
    let fwd_loss = |seq: &Tensor<f64>, f: &LstmParams<f64>, b: &LstmParams<f64>| {
        let (out, _) = bidirectional_forward(seq, f, b).unwrap();
        weighted_sum(&out, &weights)
    };
    let mut worst: f64 = 0.0;

    let mut s = seq.clone();
    let numeric = central_difference(gseq.len(), |k, d| {
        probe_tensor(&mut s, k, d, |t| fwd_loss(t, &fwd, &bwd))
    });
    worst = worst.max(max_rel_err(gseq.data(), &numeric));

    // One weight tensor per direction; the full per-direction parameter
    // check is covered by check_lstm.
    let mut w = fwd.w.clone();
    let numeric = central_difference(gf.0.len(), |k, d| {
        probe_tensor(&mut w, k, d, |t| {
            let mut f2 = fwd.clone();
            f2.w = t.clone();
            fwd_loss(&seq, &f2, &bwd)
        })
    });
    worst = worst.max(max_rel_err(gf.0.data(), &numeric));

    let mut w = bwd.w.clone();
    let numeric = central_difference(gb.0.len(), |k, d| {
        probe_tensor(&mut w, k, d, |t| {
            let mut b2 = bwd.clone();
            b2.w = t.clone();
            fwd_loss(&seq, &fwd, &b2)
        })
    });
    worst = worst.max(max_rel_err(gb.0.data(), &numeric));
    worst
}

pub fn check_projection(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let (t, d, o) = (4, 3, 2);
    let seq = random_tensor(&[t, d], &mut rng);
    let p = DenseParams {
        weight: random_tensor(&[o, d], &mut rng),
        bias: random_tensor(&[o], &mut rng),
    };
    let weights: Vec<f64> = (0..t * o).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let upstream = Tensor::from_vec(&[t, o], weights.clone()).unwrap();
    let (gseq, gw, gb) = project_backward(&seq, &p, &upstream).unwrap();
    let mut worst: f64 = 0.0;

    let mut w = p.weight.clone();
    let numeric = central_difference(gw.len(), |k, d| {
        probe_tensor(&mut w, k, d, |t| {
            let p2 = DenseParams { weight: t.clone(), bias: p.bias.clone() };
            weighted_sum(&project(&seq, &p2).unwrap(), &weights)
        })
    });
    worst = worst.max(max_rel_err(gw.data(), &numeric));

    let mut b = p.bias.clone();
    let numeric = central_difference(gb.len(), |k, d| {
        probe_tensor(&mut b, k, d, |t| {
            let p2 = DenseParams { weight: p.weight.clone(), bias: t.clone() };
            weighted_sum(&project(&seq, &p2).unwrap(), &weights)
        })
    });
    worst = worst.max(max_rel_err(gb.data(), &numeric));

    let mut s = seq.clone();
    let numeric = central_difference(gseq.len(), |k, d| {
        probe_tensor(&mut s, k, d, |t| {
            weighted_sum(&project(t, &p).unwrap(), &weights)
        })
    });
    worst = worst.max(max_rel_err(gseq.data(), &numeric));
    worst
}

pub fn check_ctc(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let steps = 5;
    let classes = 4;
    let logits = random_tensor(&[steps, classes], &mut rng);
    let label = super::feasible_label(2, classes - 1, steps, &mut rng);
    let analytic = ctc_loss(&logits, &label).unwrap().grad_logits;

    let mut l = logits.clone();
    let numeric = central_difference(analytic.len(), |k, d| {
        probe_tensor(&mut l, k, d, |t| ctc_loss(t, &label).unwrap().loss)
    });
    max_rel_err(analytic.data(), &numeric)
}

/// Stratified sample of parameter slots across every tensor, at least one
/// per tensor.
fn sample_slots(
    params: &ModelParams<f64>,
    want: usize,
    rng: &mut SplitMix64,
) -> Vec<(usize, usize)> {
    let named = params.named_tensors(false);
    let total: usize = named.iter().map(|(_, t)| t.len()).sum();
    let mut slots = Vec::new();
    for (ti, (_, t)) in named.iter().enumerate() {
        let quota = (want * t.len()).div_ceil(total).max(1).min(t.len());
        let mut picked = std::collections::HashSet::new();
        while picked.len() < quota {
            picked.insert(rng.below(t.len()));
        }
        let mut sorted: Vec<usize> = picked.into_iter().collect();
        sorted.sort_unstable();
        for k in sorted {
            slots.push((ti, k));
        }
    }
    slots
}

/// End-to-end check on the tiny network: mean CTC loss of a 2-image batch,
/// analytic gradients from the full backward pass against central
/// differences over a stratified parameter sample covering every tensor.
pub fn check_end_to_end(seed: u64, min_slots: usize) -> f64 {
    let cfg = tiny_config();
    let vocab = Vocabulary::new(('a'..='c').collect()).unwrap();
    let state: TrainingState<f64> = build_model(cfg.clone(), vocab.clone(), seed).unwrap();

    let mut rng = SplitMix64::new(seed ^ 0x5EED);
    let images: Vec<GrayImage> = (0..2)
        .map(|_| {
            let pixels: Vec<u8> = (0..16 * 8).map(|_| (rng.next_u64() % 256) as u8).collect();
            GrayImage::new(16, 8, pixels).unwrap()
        })
        .collect();
    let steps = cfg.sequence_steps();
    let labels = vec![
        super::feasible_label(2, vocab.size(), steps, &mut rng),
        super::feasible_label(1, vocab.size(), steps, &mut rng),
    ];

    let (_, grads) = {
        let mut s = state.clone();
        loss_gradients(&mut s, &images, &labels).unwrap()
    };
    let slots = sample_slots(&state.params, min_slots, &mut rng);
    assert!(slots.len() >= min_slots, "sampled {} slots", slots.len());

    let mut params = state.params.clone();
    let loss_at = |params: &ModelParams<f64>| -> f64 {
        let mut s = state.clone();
        s.params = params.clone();
        let (loss, _) = loss_gradients(&mut s, &images, &labels).unwrap();
        loss
    };

    let mut worst: f64 = 0.0;
    for (ti, k) in slots {
        let analytic = grads.named_tensors(false)[ti].1.data()[k];
        let orig = params.named_tensors(false)[ti].1.data()[k];
        params.named_tensors_mut(false)[ti].1.data_mut()[k] = orig + super::FD_STEP;
        let plus = loss_at(&params);
        params.named_tensors_mut(false)[ti].1.data_mut()[k] = orig - super::FD_STEP;
        let minus = loss_at(&params);
        params.named_tensors_mut(false)[ti].1.data_mut()[k] = orig;
        let numeric = (plus - minus) / (2.0 * super::FD_STEP);
        worst = worst.max(super::rel_err(analytic, numeric));
    }
    worst
}
