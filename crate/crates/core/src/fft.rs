//! Thin FFT wrapper with fixed normalization.
//!
//! rustfft applies no scaling in either direction; this wrapper pins the
//! convention used throughout the crate: `forward` is the plain DFT and
//! `inverse` divides by `n`, so `inverse(forward(x)) == x`. Scratch space is
//! allocated once per plan, which matters in the time-stepping hot loop.

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::scalar::Scalar;

/// A forward/inverse FFT plan pair of fixed length.
pub struct FftPair<T: Scalar> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scratch: Vec<Complex<T>>,
    n: usize,
}

impl<T: Scalar> FftPair<T> {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "FFT length must be positive");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            forward,
            inverse,
            scratch: vec![Complex::default(); scratch_len],
            n,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place unnormalized DFT.
    pub fn forward(&mut self, buf: &mut [Complex<T>]) {
        debug_assert_eq!(buf.len(), self.n);
        self.forward.process_with_scratch(buf, &mut self.scratch);
    }

    /// In-place inverse DFT, scaled by `1/n`.
    pub fn inverse(&mut self, buf: &mut [Complex<T>]) {
        debug_assert_eq!(buf.len(), self.n);
        self.inverse.process_with_scratch(buf, &mut self.scratch);
        let scale = T::one() / T::of_usize(self.n);
        for v in buf.iter_mut() {
            *v = v.scale(scale);
        }
    }
}
