//! Minimal dense N-dimensional array.
//!
//! Row-major storage is part of the on-disk contracts (dataset payloads,
//! checkpoints), so the layout is fixed rather than abstracted. There is no
//! broadcasting machinery beyond the per-last-axis bias case and no view
//! types; each layer owns its explicit backward pass instead of an autodiff
//! graph.

use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("dimension mismatch in {context}: left shape {left:?}, right shape {right:?}")]
    Mismatch {
        left: Vec<usize>,
        right: Vec<usize>,
        context: &'static str,
    },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { len: usize, shape: Vec<usize> },
}

/// Pointwise binary operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

/// Axis reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Max,
    Mean,
}

/// Result of [`Tensor::reduce`]; `argmax` carries the winning index along the
/// reduced axis for every output slot when the op is `Max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduced<T> {
    pub values: Tensor<T>,
    pub argmax: Option<Vec<usize>>,
}

/// Dense row-major array of scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, ShapeError> {
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(ShapeError::DataLength {
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Flat offset of a multi-index.
    #[inline]
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, (&ix, &ext)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(ix < ext, "index {ix} out of range for axis {i} ({ext})");
            off = off * ext + ix;
        }
        off
    }

    #[inline]
    pub fn at(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: &[usize], value: T) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    /// Reinterpret as a new shape of the same length.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, ShapeError> {
        let want: usize = shape.iter().product();
        if want != self.data.len() {
            return Err(ShapeError::DataLength {
                len: self.data.len(),
                shape: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn scale_in_place(&mut self, s: T) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    /// Accumulate `other` into `self`. Shapes must match exactly.
    pub fn add_assign(&mut self, other: &Self) -> Result<(), ShapeError> {
        if self.shape != other.shape {
            return Err(ShapeError::Mismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
                context: "add_assign",
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Standard matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Self) -> Result<Self, ShapeError> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = other.dims2("matmul")?;
        if k != k2 {
            return Err(ShapeError::Mismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
                context: "matmul inner extents",
            });
        }
        let mut out = Tensor::zeros(&[m, n]);
        matmul_into(&self.data, &other.data, &mut out.data, m, k, n, false);
        Ok(out)
    }

    /// `self * other^T` where `other` is `[n, k]`. Used by backward passes to
    /// avoid materializing transposes.
    pub(crate) fn matmul_nt(&self, other: &Self) -> Result<Self, ShapeError> {
        let (m, k) = self.dims2("matmul_nt")?;
        let (n, k2) = other.dims2("matmul_nt")?;
        if k != k2 {
            return Err(ShapeError::Mismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
                context: "matmul_nt inner extents",
            });
        }
        let mut out = Tensor::zeros(&[m, n]);
        let b = &other.data;
        par_rows(&mut out.data, n, m * n * k, |i, row| {
            let a_row = &self.data[i * k..(i + 1) * k];
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = dot(a_row, &b[j * k..(j + 1) * k]);
            }
        });
        Ok(out)
    }

    /// Rank-2 transpose.
    pub fn transposed(&self) -> Result<Self, ShapeError> {
        let (m, n) = self.dims2("transpose")?;
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..m {
            for j in 0..n {
                out.data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(out)
    }

    /// Pointwise op; `other` may be a vector matching the last axis, in which
    /// case it is repeated along all leading axes (bias broadcast).
    pub fn elementwise(&self, other: &Self, op: ElementwiseOp) -> Result<Self, ShapeError> {
        let apply = |a: T, b: T| match op {
            ElementwiseOp::Add => a + b,
            ElementwiseOp::Sub => a - b,
            ElementwiseOp::Mul => a * b,
        };
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| apply(a, b))
                .collect();
            return Ok(Self {
                shape: self.shape.clone(),
                data,
            });
        }
        let last = *self.shape.last().unwrap_or(&0);
        if other.rank() == 1 && other.shape[0] == last {
            let mut out = self.clone();
            for chunk in out.data.chunks_mut(last) {
                for (a, &b) in chunk.iter_mut().zip(&other.data) {
                    *a = apply(*a, b);
                }
            }
            return Ok(out);
        }
        Err(ShapeError::Mismatch {
            left: self.shape.clone(),
            right: other.shape.clone(),
            context: "elementwise",
        })
    }

    /// Reduce along `axis`; the result drops that axis.
    pub fn reduce(&self, axis: usize, op: ReduceOp) -> Result<Reduced<T>, ShapeError> {
        if axis >= self.rank() {
            return Err(ShapeError::AxisOutOfRange {
                axis,
                rank: self.rank(),
            });
        }
        let extent = self.shape[axis];
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out_shape: Vec<usize> = self.shape.clone();
        out_shape.remove(axis);
        let mut values = Tensor::zeros(&out_shape);
        let mut argmax = if matches!(op, ReduceOp::Max) {
            Some(vec![0usize; outer * inner])
        } else {
            None
        };
        for o in 0..outer {
            for i in 0..inner {
                let slot = o * inner + i;
                match op {
                    ReduceOp::Sum | ReduceOp::Mean => {
                        let mut acc = T::zero();
                        for e in 0..extent {
                            acc += self.data[(o * extent + e) * inner + i];
                        }
                        if matches!(op, ReduceOp::Mean) {
                            acc /= T::c(extent as f64);
                        }
                        values.data[slot] = acc;
                    }
                    ReduceOp::Max => {
                        let mut best = self.data[o * extent * inner + i];
                        let mut best_e = 0;
                        for e in 1..extent {
                            let v = self.data[(o * extent + e) * inner + i];
                            if v > best {
                                best = v;
                                best_e = e;
                            }
                        }
                        values.data[slot] = best;
                        argmax.as_mut().unwrap()[slot] = best_e;
                    }
                }
            }
        }
        Ok(Reduced { values, argmax })
    }

    fn dims2(&self, context: &'static str) -> Result<(usize, usize), ShapeError> {
        if self.rank() != 2 {
            return Err(ShapeError::Mismatch {
                left: self.shape.clone(),
                right: vec![],
                context,
            });
        }
        Ok((self.shape[0], self.shape[1]))
    }
}

/// Work size above which row-parallel kernels engage. Below it the rayon
/// dispatch costs more than the arithmetic.
const PAR_FLOP_THRESHOLD: usize = 262_144;

/// Run `body(i, row_i)` over the rows of a `[rows, width]` buffer, in
/// parallel when the job is big enough. Every output element is written by
/// exactly one call with a fixed inner order, so results do not depend on
/// the thread count.
pub(crate) fn par_rows<T: Scalar>(
    data: &mut [T],
    width: usize,
    flops: usize,
    body: impl Fn(usize, &mut [T]) + Send + Sync,
) {
    if width == 0 || data.is_empty() {
        return;
    }
    if flops >= PAR_FLOP_THRESHOLD {
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| body(i, row));
    } else {
        for (i, row) in data.chunks_mut(width).enumerate() {
            body(i, row);
        }
    }
}

/// `out (+)= a * b` for row-major `a [m,k]`, `b [k,n]`. When `accumulate` is
/// false `out` is overwritten. i-k-j loop order keeps the inner loop
/// contiguous; per-element accumulation order is fixed (k ascending).
pub(crate) fn matmul_into<T: Scalar>(
    a: &[T],
    b: &[T],
    out: &mut [T],
    m: usize,
    k: usize,
    n: usize,
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    par_rows(out, n, m * n * k, |i, row| {
        if !accumulate {
            row.fill(T::zero());
        }
        let a_row = &a[i * k..(i + 1) * k];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            let b_row = &b[kk * n..(kk + 1) * n];
            axpy(row, a_ik, b_row);
        }
    });
}

/// Fixed-order dot product: four independent lanes summed in a set order,
/// so the value is identical whatever the target vector width.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let split = a.len() - a.len() % 4;
    let (a4, a_tail) = a.split_at(split);
    let (b4, b_tail) = b.split_at(split);
    for (ca, cb) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (&x, &y) in a_tail.iter().zip(b_tail) {
        s += x * y;
    }
    s
}

/// `y += a * x`, elementwise.
#[inline]
pub(crate) fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tensor<f64>;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() <= tol, "slot {i}: {x} vs {y}");
        }
    }

    /// Triple-loop reference multiply.
    fn matmul_reference(a: &T64, b: &T64) -> T64 {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut out = T64::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += a.at(&[i, kk]) * b.at(&[kk, j]);
                }
                out.set(&[i, j], acc);
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let eye = T64::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = T64::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(eye.matmul(&b).unwrap(), b);
        assert_eq!(b.matmul(&eye).unwrap(), b);
    }

    #[test]
    fn matmul_zero() {
        let a = T64::zeros(&[2, 3]);
        let b = T64::from_vec(&[3, 2], (1..=6).map(f64::from).collect()).unwrap();
        assert_eq!(a.matmul(&b).unwrap(), T64::zeros(&[2, 2]));
    }

    #[test]
    fn matmul_small_case() {
        let a = T64::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = T64::from_vec(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let got = a.matmul(&b).unwrap();
        // Frozen from the triple-loop reference.
        assert_eq!(got.data(), &[19.0, 22.0, 43.0, 50.0]);
        assert_eq!(got, matmul_reference(&a, &b));
    }

    #[test]
    fn matmul_matches_reference_on_random_shapes() {
        let mut rng = crate::rng::SplitMix64::new(11);
        for _ in 0..20 {
            let m = 1 + rng.below(6);
            let k = 1 + rng.below(6);
            let n = 1 + rng.below(6);
            let a = T64::from_vec(
                &[m, k],
                (0..m * k).map(|_| rng.uniform_in(-10.0, 10.0)).collect(),
            )
            .unwrap();
            let b = T64::from_vec(
                &[k, n],
                (0..k * n).map(|_| rng.uniform_in(-10.0, 10.0)).collect(),
            )
            .unwrap();
            let got = a.matmul(&b).unwrap();
            let want = matmul_reference(&a, &b);
            assert_close(got.data(), want.data(), 1e-12);
        }
    }

    #[test]
    fn matmul_distributes_over_addition() {
        let mut rng = crate::rng::SplitMix64::new(5);
        for _ in 0..20 {
            let a = T64::from_vec(&[3, 4], (0..12).map(|_| rng.uniform_in(-10.0, 10.0)).collect())
                .unwrap();
            let b = T64::from_vec(&[4, 2], (0..8).map(|_| rng.uniform_in(-10.0, 10.0)).collect())
                .unwrap();
            let c = T64::from_vec(&[4, 2], (0..8).map(|_| rng.uniform_in(-10.0, 10.0)).collect())
                .unwrap();
            let lhs = a
                .matmul(&b.elementwise(&c, ElementwiseOp::Add).unwrap())
                .unwrap();
            let rhs = a
                .matmul(&b)
                .unwrap()
                .elementwise(&a.matmul(&c).unwrap(), ElementwiseOp::Add)
                .unwrap();
            assert_close(lhs.data(), rhs.data(), 1e-12);
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = T64::zeros(&[2, 3]);
        let b = T64::zeros(&[4, 2]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn matmul_nt_matches_plain() {
        let mut rng = crate::rng::SplitMix64::new(23);
        let a = T64::from_vec(&[3, 5], (0..15).map(|_| rng.uniform_in(-2.0, 2.0)).collect())
            .unwrap();
        let b = T64::from_vec(&[4, 5], (0..20).map(|_| rng.uniform_in(-2.0, 2.0)).collect())
            .unwrap();
        let got = a.matmul_nt(&b).unwrap();
        let want = a.matmul(&b.transposed().unwrap()).unwrap();
        assert_close(got.data(), want.data(), 1e-12);
    }

    #[test]
    fn elementwise_add_zero() {
        let a = T64::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let z = T64::zeros(&[3]);
        assert_eq!(a.elementwise(&z, ElementwiseOp::Add).unwrap(), a);
    }

    #[test]
    fn elementwise_mul_squares() {
        let x = T64::from_vec(&[2], vec![-1.0, 2.0]).unwrap();
        let got = x.elementwise(&x, ElementwiseOp::Mul).unwrap();
        assert_eq!(got.data(), &[1.0, 4.0]);
    }

    #[test]
    fn elementwise_bias_broadcast() {
        let m = T64::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bias = T64::from_vec(&[3], vec![10.0, 20.0, 30.0]).unwrap();
        let got = m.elementwise(&bias, ElementwiseOp::Add).unwrap();
        // Explicit-loop oracle: every row shifted by the bias.
        let mut want = m.clone();
        for r in 0..2 {
            for c in 0..3 {
                want.set(&[r, c], m.at(&[r, c]) + bias.at(&[c]));
            }
        }
        assert_eq!(got, want);
    }

    #[test]
    fn elementwise_incompatible_shapes() {
        let a = T64::zeros(&[2, 3]);
        let b = T64::zeros(&[2]);
        assert!(a.elementwise(&b, ElementwiseOp::Add).is_err());
    }

    #[test]
    fn reduce_sum_axis0() {
        let m = T64::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = m.reduce(0, ReduceOp::Sum).unwrap();
        assert_eq!(r.values.data(), &[4.0, 6.0]);
        assert!(r.argmax.is_none());
    }

    #[test]
    fn reduce_max_with_indices() {
        let m = T64::from_vec(&[2, 2], vec![1.0, 5.0, 3.0, 4.0]).unwrap();
        let r = m.reduce(1, ReduceOp::Max).unwrap();
        assert_eq!(r.values.data(), &[5.0, 4.0]);
        assert_eq!(r.argmax.unwrap(), vec![1, 1]);
    }

    #[test]
    fn reduce_mean_of_constant() {
        let m = T64::full(&[3, 4], 2.5);
        let r = m.reduce(0, ReduceOp::Mean).unwrap();
        assert!(r.values.data().iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn reduce_axis_out_of_range() {
        let m = T64::zeros(&[2, 2]);
        assert_eq!(
            m.reduce(2, ReduceOp::Sum).unwrap_err(),
            ShapeError::AxisOutOfRange { axis: 2, rank: 2 }
        );
    }

    #[test]
    fn reduce_sum_is_associative_across_axes() {
        let mut rng = crate::rng::SplitMix64::new(77);
        let t = T64::from_vec(
            &[3, 4, 5],
            (0..60).map(|_| rng.uniform_in(-10.0, 10.0)).collect(),
        )
        .unwrap();
        let total: f64 = t.data().iter().sum();
        let step = t
            .reduce(0, ReduceOp::Sum)
            .unwrap()
            .values
            .reduce(0, ReduceOp::Sum)
            .unwrap()
            .values
            .reduce(0, ReduceOp::Sum)
            .unwrap()
            .values;
        assert!((step.data()[0] - total).abs() < 1e-12);
    }

    #[test]
    fn from_vec_length_check() {
        assert!(T64::from_vec(&[2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let a = Tensor::<f32>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::<f32>::from_vec(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[19.0, 22.0, 43.0, 50.0]);
    }
}
