//! Dense linear-algebra kernels shared by the dense and convolutional layers.
//!
//! Every reduction runs in a fixed order so results are bit-reproducible.
//! The eight-lane accumulators let the compiler emit packed arithmetic
//! without reassociating anything.

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Scalar type the network engine runs on: `f32` for training, `f64` for
/// verification.
pub trait Real: Float + AddAssign + SubAssign + MulAssign + Debug + Send + Sync + 'static {
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

const LANES: usize = 8;

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    let s0 = (acc[0] + acc[4]) + (acc[1] + acc[5]);
    let s1 = (acc[2] + acc[6]) + (acc[3] + acc[7]);
    (s0 + s1) + tail
}

/// `y += alpha · x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// `out[i, j] = bias[j] + Σ_l a[i, l] · b[j, l]` with `a: m×k`, `b: n×k`.
pub fn matmul_nt_bias<T: Real>(a: &[T], m: usize, k: usize, b: &[T], n: usize, bias: &[T], out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for (row, out_row) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for ((o, w), bj) in out_row.iter_mut().zip(b.chunks_exact(k)).zip(bias) {
            *o = *bj + dot(row, w);
        }
    }
}

/// `acc[j, l] += Σ_i g[i, j] · x[i, l]` with `g: m×n`, `x: m×k`, `acc: n×k`.
pub fn accumulate_tn<T: Real>(g: &[T], m: usize, n: usize, x: &[T], k: usize, acc: &mut [T]) {
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(x.len(), m * k);
    debug_assert_eq!(acc.len(), n * k);
    for (g_row, x_row) in g.chunks_exact(n).zip(x.chunks_exact(k)) {
        for (gj, acc_row) in g_row.iter().zip(acc.chunks_exact_mut(k)) {
            if *gj != T::zero() {
                axpy(*gj, x_row, acc_row);
            }
        }
    }
}

/// `out[i, l] = Σ_j g[i, j] · w[j, l]` with `g: m×n`, `w: n×k`, `out: m×k`.
pub fn matmul_nn<T: Real>(g: &[T], m: usize, n: usize, w: &[T], k: usize, out: &mut [T]) {
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(w.len(), n * k);
    debug_assert_eq!(out.len(), m * k);
    for (g_row, out_row) in g.chunks_exact(n).zip(out.chunks_exact_mut(k)) {
        out_row.iter_mut().for_each(|v| *v = T::zero());
        for (gj, w_row) in g_row.iter().zip(w.chunks_exact(k)) {
            if *gj != T::zero() {
                axpy(*gj, w_row, out_row);
            }
        }
    }
}

/// Column sums: `acc[j] += Σ_i g[i, j]`.
pub fn accumulate_colsum<T: Real>(g: &[T], n: usize, acc: &mut [T]) {
    debug_assert_eq!(acc.len(), n);
    for row in g.chunks_exact(n) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += *v;
        }
    }
}
