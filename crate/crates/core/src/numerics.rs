//! Small numerical helpers shared across modules: deterministic reductions
//! and FFT-based spectral differentiation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const BLOCK: usize = 64;

/// Pairwise (cascade) summation with a fixed association order.
///
/// The result depends only on the input sequence, never on how work is
/// scheduled, and the rounding error grows like `log n` instead of `n`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = split_point(values.len());
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Complex counterpart of [`pairwise_sum`].
pub fn pairwise_sum_c(values: &[Complex64]) -> Complex64 {
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = split_point(values.len());
    pairwise_sum_c(&values[..mid]) + pairwise_sum_c(&values[mid..])
}

/// `Σ conj(a_i) b_i` with pairwise association.
pub fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= BLOCK {
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            acc += x.conj() * y;
        }
        return acc;
    }
    let mid = split_point(a.len());
    dot_conj(&a[..mid], &b[..mid]) + dot_conj(&a[mid..], &b[mid..])
}

/// `Σ |a_i|²` with pairwise association.
pub fn norm_sqr_sum(a: &[Complex64]) -> f64 {
    if a.len() <= BLOCK {
        return a.iter().map(|x| x.norm_sqr()).sum();
    }
    let mid = split_point(a.len());
    norm_sqr_sum(&a[..mid]) + norm_sqr_sum(&a[mid..])
}

// Split on a multiple of the block size so leaves stay full.
fn split_point(len: usize) -> usize {
    let blocks = len.div_ceil(BLOCK);
    (blocks / 2).max(1) * BLOCK
}

/// Angular wavenumbers of an `n`-point periodic grid of length `period`,
/// in FFT order.
pub fn fft_wavenumbers(n: usize, period: f64) -> Vec<f64> {
    let base = 2.0 * PI / period;
    (0..n)
        .map(|j| {
            let signed = if j <= n / 2 { j as i64 } else { j as i64 - n as i64 };
            base * signed as f64
        })
        .collect()
}

/// Forward/inverse plan pair for square `n × n` row-major arrays.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.forward);
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inverse);
        let scale = 1.0 / (self.n * self.n) as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    fn apply(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        // rows are contiguous
        plan.process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                column[r] = data[r * n + c];
            }
            plan.process(&mut column);
            for r in 0..n {
                data[r * n + c] = column[r];
            }
        }
    }
}
