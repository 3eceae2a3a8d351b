//! Square 2D FFTs and centering shifts on row-major buffers.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Unnormalized forward transform of an `n x n` buffer.
    pub fn forward(&self, data: &mut [C64]) {
        self.run(data, &self.fwd);
    }

    /// Unnormalized inverse transform of an `n x n` buffer.
    pub fn inverse(&self, data: &mut [C64]) {
        self.run(data, &self.inv);
    }

    fn run(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        plan.process(data);
        transpose(data, n);
        plan.process(data);
        transpose(data, n);
    }
}

fn transpose(data: &mut [C64], n: usize) {
    for j in 0..n {
        for i in (j + 1)..n {
            data.swap(j * n + i, i * n + j);
        }
    }
}

/// Swaps quadrants so the zero-frequency sample moves to the center. For even
/// `n` this is its own inverse.
pub fn fftshift2(data: &mut [C64], n: usize) {
    debug_assert!(n % 2 == 0);
    let h = n / 2;
    for j in 0..h {
        for i in 0..n {
            let a = j * n + i;
            let b = (j + h) * n + (i + h) % n;
            data.swap(a, b);
        }
    }
}

/// Frequency in cycles per sample, numpy `fftfreq` ordering.
pub fn fftfreq(i: usize, n: usize) -> f64 {
    if i < n.div_ceil(2) {
        i as f64 / n as f64
    } else {
        (i as f64 - n as f64) / n as f64
    }
}
