//! LSTM recurrence, its backward pass through time, and the bidirectional
//! wrapper that concatenates the two directions per step.

use crate::scalar::Scalar;
use crate::tensor::{axpy, dot, ShapeError, Tensor};

use super::{sigmoid, LstmParams};

/// Scan order over the sequence. `Backward` processes the reversed sequence
/// and re-reverses its outputs, so index `t` of the result always aligns
/// with input step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Everything the through-time backward pass needs, stored in processing
/// order: inputs, post-activation gate values, cell states and hiddens.
#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    xs: Vec<T>,      // T x D
    gates: Vec<T>,   // T x 4H, (input, forget, candidate, output)
    cells: Vec<T>,   // T x H
    tanh_c: Vec<T>,  // T x H
    hiddens: Vec<T>, // T x H
    direction: Direction,
    steps: usize,
}

fn check_lstm<T: Scalar>(
    seq: &Tensor<T>,
    p: &LstmParams<T>,
) -> Result<(usize, usize, usize), ShapeError> {
    let mismatch = |context| ShapeError::Mismatch {
        left: seq.shape().to_vec(),
        right: p.w.shape().to_vec(),
        context,
    };
    if seq.rank() != 2 || p.w.rank() != 2 {
        return Err(mismatch("lstm expects a [T,D] sequence"));
    }
    let (t, d) = (seq.shape()[0], seq.shape()[1]);
    let h = p.hidden_size();
    if p.w.shape() != [4 * h, d] {
        return Err(mismatch("lstm input width"));
    }
    if p.u.shape() != [4 * h, h] || p.b.shape() != [4 * h] {
        return Err(ShapeError::Mismatch {
            left: p.u.shape().to_vec(),
            right: p.b.shape().to_vec(),
            context: "lstm recurrent shapes",
        });
    }
    Ok((t, d, h))
}

/// `out[r] += m[r, :] . v` for a row-major `[rows, cols]` matrix.
fn matvec_add<T: Scalar>(out: &mut [T], m: &[T], v: &[T], cols: usize) {
    for (r, slot) in out.iter_mut().enumerate() {
        *slot += dot(&m[r * cols..(r + 1) * cols], v);
    }
}

/// Run the recurrence over a `[T, D]` sequence with zero initial state.
pub fn lstm_forward<T: Scalar>(
    seq: &Tensor<T>,
    p: &LstmParams<T>,
    direction: Direction,
) -> Result<(Tensor<T>, LstmCache<T>), ShapeError> {
    let (steps, d, h) = check_lstm(seq, p)?;
    let mut cache = LstmCache {
        xs: vec![T::zero(); steps * d],
        gates: vec![T::zero(); steps * 4 * h],
        cells: vec![T::zero(); steps * h],
        tanh_c: vec![T::zero(); steps * h],
        hiddens: vec![T::zero(); steps * h],
        direction,
        steps,
    };
    let mut out = Tensor::zeros(&[steps, h]);
    let mut z = vec![T::zero(); 4 * h];

    for s in 0..steps {
        let orig = match direction {
            Direction::Forward => s,
            Direction::Backward => steps - 1 - s,
        };
        let x = &seq.data()[orig * d..(orig + 1) * d];
        cache.xs[s * d..(s + 1) * d].copy_from_slice(x);

        z.copy_from_slice(p.b.data());
        matvec_add(&mut z, p.w.data(), x, d);
        if s > 0 {
            let h_prev = &cache.hiddens[(s - 1) * h..s * h];
            matvec_add(&mut z, p.u.data(), h_prev, h);
        }

        let gates = &mut cache.gates[s * 4 * h..(s + 1) * 4 * h];
        for (k, slot) in gates.iter_mut().enumerate() {
            let block = k / h;
            *slot = if block == 2 { z[k].tanh() } else { sigmoid(z[k]) };
        }

        for j in 0..h {
            let c_prev = if s > 0 {
                cache.cells[(s - 1) * h + j]
            } else {
                T::zero()
            };
            let i = gates[j];
            let f = gates[h + j];
            let g = gates[2 * h + j];
            let o = gates[3 * h + j];
            let c = f * c_prev + i * g;
            let tc = c.tanh();
            cache.cells[s * h + j] = c;
            cache.tanh_c[s * h + j] = tc;
            cache.hiddens[s * h + j] = o * tc;
        }
        out.data_mut()[orig * h..(orig + 1) * h].copy_from_slice(&cache.hiddens[s * h..(s + 1) * h]);
    }
    Ok((out, cache))
}

/// Through-time gradients. Returns the gradient with respect to the input
/// sequence and accumulates parameter gradients into `gw`, `gu`, `gb`.
pub fn lstm_backward_into<T: Scalar>(
    p: &LstmParams<T>,
    cache: &LstmCache<T>,
    upstream: &Tensor<T>,
    gw: &mut Tensor<T>,
    gu: &mut Tensor<T>,
    gb: &mut Tensor<T>,
) -> Result<Tensor<T>, ShapeError> {
    let steps = cache.steps;
    let h = p.hidden_size();
    let d = p.input_size();
    if upstream.shape() != [steps, h] {
        return Err(ShapeError::Mismatch {
            left: upstream.shape().to_vec(),
            right: vec![steps, h],
            context: "lstm upstream gradient",
        });
    }
    let mut grad_seq = Tensor::zeros(&[steps, d]);
    let mut dh_next = vec![T::zero(); h];
    let mut dc_next = vec![T::zero(); h];
    let mut dz = vec![T::zero(); 4 * h];
    let mut dx = vec![T::zero(); d];

    for s in (0..steps).rev() {
        let orig = match cache.direction {
            Direction::Forward => s,
            Direction::Backward => steps - 1 - s,
        };
        let gates = &cache.gates[s * 4 * h..(s + 1) * 4 * h];
        for j in 0..h {
            let dh = upstream.data()[orig * h + j] + dh_next[j];
            let i = gates[j];
            let f = gates[h + j];
            let g = gates[2 * h + j];
            let o = gates[3 * h + j];
            let tc = cache.tanh_c[s * h + j];
            let c_prev = if s > 0 {
                cache.cells[(s - 1) * h + j]
            } else {
                T::zero()
            };
            let dout = dh * tc;
            let dc = dc_next[j] + dh * o * (T::one() - tc * tc);
            dz[j] = dc * g * i * (T::one() - i);
            dz[h + j] = dc * c_prev * f * (T::one() - f);
            dz[2 * h + j] = dc * i * (T::one() - g * g);
            dz[3 * h + j] = dout * o * (T::one() - o);
            dc_next[j] = dc * f;
        }

        let x = &cache.xs[s * d..(s + 1) * d];
        for (gslot, &v) in gb.data_mut().iter_mut().zip(&dz) {
            *gslot += v;
        }
        dx.fill(T::zero());
        dh_next.fill(T::zero());
        for (r, &dzr) in dz.iter().enumerate() {
            axpy(&mut gw.data_mut()[r * d..(r + 1) * d], dzr, x);
            axpy(&mut dx, dzr, &p.w.data()[r * d..(r + 1) * d]);
            axpy(&mut dh_next, dzr, &p.u.data()[r * h..(r + 1) * h]);
        }
        if s > 0 {
            let h_prev = &cache.hiddens[(s - 1) * h..s * h];
            for (r, &dzr) in dz.iter().enumerate() {
                axpy(&mut gu.data_mut()[r * h..(r + 1) * h], dzr, h_prev);
            }
        }
        grad_seq.data_mut()[orig * d..(orig + 1) * d].copy_from_slice(&dx);
    }
    Ok(grad_seq)
}

/// As [`lstm_backward_into`] with freshly zeroed parameter gradients.
pub fn lstm_backward<T: Scalar>(
    p: &LstmParams<T>,
    cache: &LstmCache<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>), ShapeError> {
    let mut gw = Tensor::zeros(p.w.shape());
    let mut gu = Tensor::zeros(p.u.shape());
    let mut gb = Tensor::zeros(p.b.shape());
    let grad_seq = lstm_backward_into(p, cache, upstream, &mut gw, &mut gu, &mut gb)?;
    Ok((grad_seq, gw, gu, gb))
}

/// Caches of both directions of a bidirectional layer.
#[derive(Debug, Clone)]
pub struct BiCache<T> {
    pub forward: LstmCache<T>,
    pub backward: LstmCache<T>,
}

/// Per-step concatenation `[forward output || backward output]`.
pub fn bidirectional_forward<T: Scalar>(
    seq: &Tensor<T>,
    fwd: &LstmParams<T>,
    bwd: &LstmParams<T>,
) -> Result<(Tensor<T>, BiCache<T>), ShapeError> {
    let h = fwd.hidden_size();
    if bwd.hidden_size() != h {
        return Err(ShapeError::Mismatch {
            left: fwd.w.shape().to_vec(),
            right: bwd.w.shape().to_vec(),
            context: "bidirectional hidden sizes",
        });
    }
    let (out_f, cache_f) = lstm_forward(seq, fwd, Direction::Forward)?;
    let (out_b, cache_b) = lstm_forward(seq, bwd, Direction::Backward)?;
    let steps = seq.shape()[0];
    let mut out = Tensor::zeros(&[steps, 2 * h]);
    for t in 0..steps {
        out.data_mut()[t * 2 * h..t * 2 * h + h]
            .copy_from_slice(&out_f.data()[t * h..(t + 1) * h]);
        out.data_mut()[t * 2 * h + h..(t + 1) * 2 * h]
            .copy_from_slice(&out_b.data()[t * h..(t + 1) * h]);
    }
    Ok((
        out,
        BiCache {
            forward: cache_f,
            backward: cache_b,
        },
    ))
}

/// Mutable (w, u, b) gradient accumulators of one cell.
pub type CellGrads<'a, T> = (&'a mut Tensor<T>, &'a mut Tensor<T>, &'a mut Tensor<T>);

/// Split the `[T, 2H]` upstream into the two directions, backpropagate each
/// and sum the input gradients.
pub fn bidirectional_backward_into<T: Scalar>(
    fwd: &LstmParams<T>,
    bwd: &LstmParams<T>,
    cache: &BiCache<T>,
    upstream: &Tensor<T>,
    grads_fwd: CellGrads<'_, T>,
    grads_bwd: CellGrads<'_, T>,
) -> Result<Tensor<T>, ShapeError> {
    let h = fwd.hidden_size();
    let steps = cache.forward.steps;
    if upstream.shape() != [steps, 2 * h] {
        return Err(ShapeError::Mismatch {
            left: upstream.shape().to_vec(),
            right: vec![steps, 2 * h],
            context: "bidirectional upstream gradient",
        });
    }
    let mut up_f = Tensor::zeros(&[steps, h]);
    let mut up_b = Tensor::zeros(&[steps, h]);
    for t in 0..steps {
        up_f.data_mut()[t * h..(t + 1) * h]
            .copy_from_slice(&upstream.data()[t * 2 * h..t * 2 * h + h]);
        up_b.data_mut()[t * h..(t + 1) * h]
            .copy_from_slice(&upstream.data()[t * 2 * h + h..(t + 1) * 2 * h]);
    }
    let mut grad_seq =
        lstm_backward_into(fwd, &cache.forward, &up_f, grads_fwd.0, grads_fwd.1, grads_fwd.2)?;
    let back =
        lstm_backward_into(bwd, &cache.backward, &up_b, grads_bwd.0, grads_bwd.1, grads_bwd.2)?;
    grad_seq.add_assign(&back)?;
    Ok(grad_seq)
}
