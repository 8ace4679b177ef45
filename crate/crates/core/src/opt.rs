//! First-order stochastic optimisation.
//!
//! A single [`Adam`] implementation (Kingma & Ba, 2015) is shared by every
//! trainable model in the crate. The optimiser owns its moment buffers and
//! step counter; callers own the parameter vector and hand in gradients of
//! whatever objective they are minimising. Regularisation terms (e.g. L2
//! penalties) are the caller's responsibility and should already be folded
//! into the gradient.

use crate::scalar::Scalar;

/// Adam optimiser state for a fixed-size parameter vector.
///
/// Uses the standard bias-corrected update
///
/// ```text
/// m ← β₁ m + (1 − β₁) g        m̂ = m / (1 − β₁ᵗ)
/// v ← β₂ v + (1 − β₂) g²       v̂ = v / (1 − β₂ᵗ)
/// θ ← θ − lr · m̂ / (√v̂ + ε)
/// ```
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    /// Number of steps taken so far.
    t: u32,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    /// Default first-moment decay rate.
    pub const BETA1: f64 = 0.9;
    /// Default second-moment decay rate.
    pub const BETA2: f64 = 0.999;
    /// Default denominator guard.
    pub const EPS: f64 = 1e-8;

    /// Creates an optimiser for `dim` parameters with the given learning
    /// rate and default decay rates.
    pub fn new(dim: usize, lr: T) -> Self {
        Self {
            lr,
            beta1: T::of_f64(Self::BETA1),
            beta2: T::of_f64(Self::BETA2),
            eps: T::of_f64(Self::EPS),
            t: 0,
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
        }
    }

    /// Number of update steps performed.
    pub fn steps(&self) -> u32 {
        self.t
    }

    /// Resets the moment buffers and step counter, keeping the
    /// hyperparameters. Useful for multi-start schemes that reuse one
    /// optimiser across restarts.
    pub fn reset(&mut self) {
        self.t = 0;
        self.m.iter_mut().for_each(|x| *x = T::zero());
        self.v.iter_mut().for_each(|x| *x = T::zero());
    }

    /// Applies one Adam update to `params` in place.
    ///
    /// # Panics
    ///
    /// Panics if `params` or `grads` differ in length from the dimension
    /// the optimiser was created with.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len(), "parameter dimension mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient dimension mismatch");
        self.t += 1;
        let one = T::one();
        // Bias corrections 1 − βᵗ, computed in f64 so that long runs in f32
        // do not round 1 − β₂ᵗ to zero.
        let c1 = T::of_f64(1.0 - Self::BETA1.powi(self.t as i32));
        let c2 = T::of_f64(1.0 - Self::BETA2.powi(self.t as i32));
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// After the first step the bias corrections are exact (m̂ = g,
    /// v̂ = g²), so the update is −lr·g/(|g| + ε) elementwise.
    #[test]
    fn first_step_matches_closed_form() {
        let lr = 0.05_f64;
        let mut opt = Adam::new(3, lr);
        let mut params = vec![1.0, -2.0, 0.5];
        let grads = vec![0.3, -4.0, 1e-12];
        let before = params.clone();
        opt.step(&mut params, &grads);
        for i in 0..3 {
            let expected = before[i] - lr * grads[i] / (grads[i].abs() + Adam::<f64>::EPS);
            assert_relative_eq!(params[i], expected, max_relative = 1e-12);
        }
        assert_eq!(opt.steps(), 1);
    }

    /// Adam drives a separable quadratic to its minimiser.
    #[test]
    fn converges_on_quadratic() {
        let scale = [1.0, 10.0, 0.1, 4.0];
        let target = [0.3, -1.2, 2.0, -0.7];
        let mut params = vec![0.0_f64; 4];
        let mut opt = Adam::new(4, 0.05);
        let mut grads = vec![0.0; 4];
        for _ in 0..4000 {
            for i in 0..4 {
                grads[i] = 2.0 * scale[i] * (params[i] - target[i]);
            }
            opt.step(&mut params, &grads);
        }
        for i in 0..4 {
            assert!(
                (params[i] - target[i]).abs() < 1e-5,
                "coordinate {i} stalled at {} (target {})",
                params[i],
                target[i]
            );
        }
    }

    /// Resetting clears the moments so the next step again matches the
    /// first-step closed form.
    #[test]
    fn reset_restores_initial_state() {
        let lr = 0.01_f64;
        let mut opt = Adam::new(1, lr);
        let mut params = vec![5.0];
        opt.step(&mut params, &[1.0]);
        opt.step(&mut params, &[-2.0]);
        opt.reset();
        assert_eq!(opt.steps(), 0);
        let before = params[0];
        opt.step(&mut params, &[0.7]);
        let expected = before - lr * 0.7 / (0.7 + Adam::<f64>::EPS);
        assert_relative_eq!(params[0], expected, max_relative = 1e-12);
    }

    /// The update rule is precision-generic: an f32 run tracks the f64 run.
    #[test]
    fn f32_tracks_f64() {
        let mut p64 = vec![1.0_f64, -0.5];
        let mut p32 = vec![1.0_f32, -0.5];
        let mut o64 = Adam::new(2, 0.02_f64);
        let mut o32 = Adam::new(2, 0.02_f32);
        for k in 0..50 {
            let g64 = vec![(k as f64 * 0.1).sin() + p64[0], p64[1] * 0.3];
            let g32: Vec<f32> = g64.iter().map(|&g| g as f32).collect();
            o64.step(&mut p64, &g64);
            o32.step(&mut p32, &g32);
        }
        for i in 0..2 {
            assert!((p64[i] - p32[i] as f64).abs() < 1e-4);
        }
    }
}
