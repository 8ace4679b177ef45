//! Minimal feed-forward network engine.
//!
//! Dense ReLU stacks with three loss heads — mean squared error, Gaussian
//! negative log likelihood (with one global trained `log σ_n`), and the
//! variational ELBO (Bayes-by-backprop weight posteriors) — plus inverted
//! dropout and L2 regularization, trained by Adam over shuffled mini-batches
//! with reverse-mode gradients computed by hand.
//!
//! Structural conventions:
//!
//! * Layer `l` maps `sizes[l] → sizes[l+1]` where
//!   `sizes = [input_dim, hidden.., 1]`; every layer but the last applies
//!   ReLU, the last is linear.
//! * Dropout is applied to the *input* of every layer except the first
//!   hidden layer (so never to the raw input features), with inverted
//!   scaling `1/(1−r_D)` on kept units so layer expectations are preserved.
//! * Variational layers store per-weight means `w₀` and a softplus
//!   parameterization `σ_w = softplus(ρ)`, sampled as `w = w₀ + ε·σ_w` with
//!   one `ε` draw per forward pass (inference) or per mini-batch (training).
//!   Biases stay deterministic. The ELBO complexity term is the closed-form
//!   KL to a `N(0,1)` prior per weight, scaled by `kl_weight/num_batches`.
//!
//! Stochastic draws consume the caller's RNG in a fixed order (layer by
//! layer: dropout mask, then weight noise), which is what makes training and
//! stochastic inference reproducible from a seed.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat::Mat;
use crate::opt::Adam;
use crate::rng::child_rng;
use crate::scalar::Scalar;

/// Stream tag for a training run's RNG (initialization, shuffles, noise).
const STREAM_NN_TRAIN: u64 = 0x4e4e_5452;

#[derive(Debug, Error)]
pub enum NnError {
    /// The architecture or training configuration is malformed.
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    /// Input/target shapes disagree with the spec.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The training loss left the finite range.
    #[error("training loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
}

/// Activation vocabulary (the engine is ReLU-only by design).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

/// Output head: a plain scalar, or a scalar mean plus one global trained
/// homoskedastic noise level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Deterministic,
    Gaussian,
}

/// Architecture description. Scalar output is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Dropout rate `r_D` in `[0, 1)`; 0 disables dropout entirely.
    pub dropout_rate: f64,
    pub head: Head,
    /// Bayes-by-backprop weight posteriors on every layer.
    pub variational: bool,
}

impl NetworkSpec {
    /// A plain deterministic ReLU net: no dropout, no noise head.
    pub fn deterministic(input_dim: usize, hidden: Vec<usize>) -> Self {
        Self {
            input_dim,
            hidden,
            activation: Activation::Relu,
            dropout_rate: 0.0,
            head: Head::Deterministic,
            variational: false,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 {
            return Err(NnError::InvalidSpec("input_dim must be ≥ 1".into()));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(NnError::InvalidSpec("hidden widths must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnError::InvalidSpec(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Layer widths `[input_dim, hidden.., 1]`.
    fn sizes(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.hidden.len() + 2);
        s.push(self.input_dim);
        s.extend_from_slice(&self.hidden);
        s.push(1);
        s
    }

    /// Number of dense layers.
    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }
}

/// Loss heads for [`loss`]. `Elbo` uses the spec's head for its data term
/// and adds the scaled KL complexity term over variational weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    Nll,
    Elbo,
}

/// Forward-pass mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Stochastic elements active (training-time behavior).
    Train,
    /// Dropout off, variational layers evaluated at their mean weights.
    InferDeterministic,
    /// Dropout kept on and/or weights resampled: one ensemble realization.
    InferStochastic,
}

/// One forward output: the predicted mean and, for Gaussian heads, the
/// trained aleatoric noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetOutput<T> {
    pub mu: T,
    pub sigma_n: Option<T>,
}

/// Offsets of one layer's parameter blocks in the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct LayerSlot {
    w: usize,
    b: usize,
    /// Offset of the softplus noise parameters; `usize::MAX` when absent.
    rho: usize,
    fan_in: usize,
    fan_out: usize,
}

impl LayerSlot {
    fn w_len(&self) -> usize {
        self.fan_in * self.fan_out
    }
}

/// Trained (or freshly initialized) network parameters, stored flat.
#[derive(Debug, Clone)]
pub struct NetworkState<T> {
    pub spec: NetworkSpec,
    params: Vec<T>,
    slots: Vec<LayerSlot>,
    /// Offset of the global `log σ_n` for Gaussian heads.
    log_sigma: Option<usize>,
    /// Mean training loss per epoch, recorded by [`train`].
    pub loss_history: Vec<f64>,
}

fn build_slots(spec: &NetworkSpec) -> (Vec<LayerSlot>, Option<usize>, usize) {
    let sizes = spec.sizes();
    let mut slots = Vec::with_capacity(spec.num_layers());
    let mut off = 0;
    for l in 0..spec.num_layers() {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        let w = off;
        off += fan_in * fan_out;
        let b = off;
        off += fan_out;
        let rho = if spec.variational {
            let r = off;
            off += fan_in * fan_out;
            r
        } else {
            usize::MAX
        };
        slots.push(LayerSlot {
            w,
            b,
            rho,
            fan_in,
            fan_out,
        });
    }
    let log_sigma = match spec.head {
        Head::Gaussian => {
            let s = off;
            off += 1;
            Some(s)
        }
        Head::Deterministic => None,
    };
    (slots, log_sigma, off)
}

impl<T: Scalar> NetworkState<T> {
    /// He-uniform initialization: `w ~ U[−√(6/fan_in), √(6/fan_in)]`, zero
    /// biases; variational `ρ` set so `σ_w ≈ 0.05·√(2/fan_in)` (5% of the
    /// He weight scale); `log σ_n` starts at `log 0.1` (callers training a
    /// Gaussian head rescale it to the output std — see [`train`]).
    pub fn init<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<Self, NnError> {
        spec.validate()?;
        let (slots, log_sigma, len) = build_slots(spec);
        let mut params = vec![T::zero(); len];
        for slot in &slots {
            let bound = (6.0 / slot.fan_in as f64).sqrt();
            for i in 0..slot.w_len() {
                let u = T::uniform_01(rng).as_f64();
                params[slot.w + i] = T::of_f64(bound * (2.0 * u - 1.0));
            }
            if slot.rho != usize::MAX {
                let sigma_target = 0.05 * (2.0 / slot.fan_in as f64).sqrt();
                let rho = softplus_inv(sigma_target);
                for i in 0..slot.w_len() {
                    params[slot.rho + i] = T::of_f64(rho);
                }
            }
        }
        if let Some(s) = log_sigma {
            params[s] = T::of_f64(0.1_f64.ln());
        }
        Ok(Self {
            spec: spec.clone(),
            params,
            slots,
            log_sigma,
            loss_history: Vec::new(),
        })
    }

    /// Rebuilds a state from a flat parameter vector (snapshot loading).
    pub fn from_params(spec: &NetworkSpec, params: Vec<T>) -> Result<Self, NnError> {
        spec.validate()?;
        let (slots, log_sigma, len) = build_slots(spec);
        if params.len() != len {
            return Err(NnError::DimensionMismatch {
                expected: len,
                got: params.len(),
            });
        }
        Ok(Self {
            spec: spec.clone(),
            params,
            slots,
            log_sigma,
            loss_history: Vec::new(),
        })
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Trained aleatoric noise level for Gaussian heads.
    pub fn sigma_n(&self) -> Option<T> {
        self.log_sigma.map(|s| self.params[s].exp())
    }

    /// Offsets of the variational noise parameters `ρ` in the flat vector,
    /// one range per layer; empty for non-variational networks. The weight
    /// noise scale is `softplus(ρ)`, so pinning a range to `−∞` silences
    /// that layer exactly.
    pub fn noise_param_ranges(&self) -> Vec<std::ops::Range<usize>> {
        self.slots
            .iter()
            .filter(|s| s.rho != usize::MAX)
            .map(|s| s.rho..s.rho + s.w_len())
            .collect()
    }

    fn weight<'a>(params: &'a [T], slot: &LayerSlot) -> &'a [T] {
        &params[slot.w..slot.w + slot.w_len()]
    }

    fn bias<'a>(params: &'a [T], slot: &LayerSlot) -> &'a [T] {
        &params[slot.b..slot.b + slot.fan_out]
    }

    fn rho<'a>(params: &'a [T], slot: &LayerSlot) -> &'a [T] {
        &params[slot.rho..slot.rho + slot.w_len()]
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

fn softplus_inv(y: f64) -> f64 {
    y.exp_m1().ln()
}

// ---------------------------------------------------------------------------
// Forward pass (single query).
// ---------------------------------------------------------------------------

/// Runs one input through the network.
///
/// In `Train`/`InferStochastic` modes the RNG is consumed in a fixed order —
/// for each layer after the first: the dropout mask, then (all layers) the
/// variational weight noise — so a seeded caller gets reproducible
/// realizations. `InferDeterministic` never touches the RNG.
///
/// # Panics
///
/// Panics if `x` length differs from the spec's `input_dim`.
pub fn forward<T: Scalar, R: Rng + ?Sized>(
    state: &NetworkState<T>,
    x: &[T],
    mode: Mode,
    rng: &mut R,
) -> NetOutput<T> {
    let spec = &state.spec;
    assert_eq!(x.len(), spec.input_dim, "input dimension");
    let stochastic = mode != Mode::InferDeterministic;
    let rate = spec.dropout_rate;
    let mut a: Vec<T> = x.to_vec();
    for (l, slot) in state.slots.iter().enumerate() {
        if l > 0 && rate > 0.0 && stochastic {
            apply_dropout(&mut a, rate, rng);
        }
        let w = NetworkState::weight(&state.params, slot);
        let b = NetworkState::bias(&state.params, slot);
        let mut z = vec![T::zero(); slot.fan_out];
        if spec.variational && stochastic {
            let rho = NetworkState::rho(&state.params, slot);
            for o in 0..slot.fan_out {
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                let rho_row = &rho[o * slot.fan_in..(o + 1) * slot.fan_in];
                let mut s = b[o];
                for i in 0..slot.fan_in {
                    let eps = T::standard_normal(rng);
                    s += (row[i] + eps * softplus(rho_row[i])) * a[i];
                }
                z[o] = s;
            }
        } else {
            for o in 0..slot.fan_out {
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                let mut s = b[o];
                for i in 0..slot.fan_in {
                    s += row[i] * a[i];
                }
                z[o] = s;
            }
        }
        if l + 1 < state.slots.len() {
            for v in z.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        a = z;
    }
    NetOutput {
        mu: a[0],
        sigma_n: state.sigma_n(),
    }
}

/// Inverted dropout in place: each unit is kept with probability `1 − rate`
/// and scaled by `1/(1 − rate)`, preserving the layer's expectation.
fn apply_dropout<T: Scalar, R: Rng + ?Sized>(a: &mut [T], rate: f64, rng: &mut R) {
    let r = T::of_f64(rate);
    let scale = T::one() / (T::one() - r);
    for v in a.iter_mut() {
        if T::uniform_01(rng) >= r {
            *v *= scale;
        } else {
            *v = T::zero();
        }
    }
}

// ---------------------------------------------------------------------------
// Loss and gradients.
// ---------------------------------------------------------------------------

/// All stochastic realizations of one mini-batch, drawn up front so a
/// gradient check can re-evaluate the loss at perturbed parameters under
/// identical noise.
#[derive(Debug, Clone)]
pub struct NoiseDraw<T> {
    /// Per layer: per-sample inverted-dropout multipliers (batch × fan_in).
    /// `None` for the first layer and whenever dropout is inactive.
    pub masks: Vec<Option<Mat<T>>>,
    /// Per layer: one weight-noise draw `ε` shaped like the weight matrix.
    /// `None` unless the spec is variational.
    pub eps: Vec<Option<Mat<T>>>,
}

/// Draws the dropout masks and weight noise for one mini-batch, consuming
/// the RNG in the same fixed order as [`forward`] (per layer: masks sample
/// by sample, then ε).
pub fn draw_noise<T: Scalar, R: Rng + ?Sized>(
    spec: &NetworkSpec,
    batch: usize,
    rng: &mut R,
) -> NoiseDraw<T> {
    let sizes = spec.sizes();
    let num_layers = spec.num_layers();
    let mut masks = Vec::with_capacity(num_layers);
    let mut eps = Vec::with_capacity(num_layers);
    let r = T::of_f64(spec.dropout_rate);
    let scale = T::one() / (T::one() - r);
    for l in 0..num_layers {
        if l > 0 && spec.dropout_rate > 0.0 {
            let mut m = Mat::zeros(batch, sizes[l]);
            for s in 0..batch {
                for i in 0..sizes[l] {
                    m[(s, i)] = if T::uniform_01(rng) >= r {
                        scale
                    } else {
                        T::zero()
                    };
                }
            }
            masks.push(Some(m));
        } else {
            masks.push(None);
        }
        if spec.variational {
            let mut e = Mat::zeros(sizes[l + 1], sizes[l]);
            for v in e.as_mut_slice().iter_mut() {
                *v = T::standard_normal(rng);
            }
            eps.push(Some(e));
        } else {
            eps.push(None);
        }
    }
    NoiseDraw { masks, eps }
}

/// Mean loss over a mini-batch plus its gradient with respect to the flat
/// parameter vector, under the fixed stochastic realization `noise`.
///
/// `l2_weight` penalizes mean weights (`+ λ·Σw₀²`, biases and noise
/// parameters excluded); `kl_scale` multiplies the ELBO complexity term and
/// is ignored by the other heads. The returned value includes both terms.
pub fn loss_with_noise<T: Scalar>(
    state: &NetworkState<T>,
    x: &Mat<T>,
    y: &[T],
    kind: LossKind,
    l2_weight: T,
    kl_scale: T,
    noise: &NoiseDraw<T>,
) -> (T, Vec<T>) {
    let spec = &state.spec;
    assert_eq!(x.cols(), spec.input_dim, "input dimension");
    assert_eq!(x.rows(), y.len(), "batch target count");
    assert!(x.rows() > 0, "empty batch");
    let nb = x.rows();
    let num_layers = state.slots.len();
    let params = &state.params;
    let mut grad = vec![T::zero(); params.len()];

    // Effective weights for this batch: sampled once when variational (and
    // the loss kind exercises sampling), otherwise the stored means.
    let sample_weights = spec.variational && kind == LossKind::Elbo;
    let mut w_eff: Vec<Vec<T>> = Vec::with_capacity(num_layers);
    let mut sp_rho: Vec<Vec<T>> = Vec::with_capacity(num_layers);
    for (l, slot) in state.slots.iter().enumerate() {
        let w = NetworkState::weight(params, slot);
        if sample_weights {
            let rho = NetworkState::rho(params, slot);
            let e = noise.eps[l].as_ref().expect("variational noise").as_slice();
            let sp: Vec<T> = rho.iter().map(|&r| softplus(r)).collect();
            let eff: Vec<T> = (0..slot.w_len()).map(|i| w[i] + e[i] * sp[i]).collect();
            w_eff.push(eff);
            sp_rho.push(sp);
        } else {
            w_eff.push(w.to_vec());
            sp_rho.push(Vec::new());
        }
    }

    let (inv_var, log_sigma_val) = match state.log_sigma {
        Some(s) => {
            let ls = params[s];
            ((-ls - ls).exp(), ls)
        }
        None => (T::one(), T::zero()),
    };
    let gaussian_data = match kind {
        LossKind::Mse => false,
        LossKind::Nll => true,
        LossKind::Elbo => matches!(spec.head, Head::Gaussian),
    };
    debug_assert!(
        !gaussian_data || state.log_sigma.is_some(),
        "gaussian data term needs a gaussian head"
    );

    let mut total = T::zero();
    let mut g_log_sigma = T::zero();
    // Per-sample forward caches: layer inputs after masking, pre-activations.
    let mut a_in: Vec<Vec<T>> = vec![Vec::new(); num_layers];
    let mut zs: Vec<Vec<T>> = vec![Vec::new(); num_layers];
    for s in 0..nb {
        let mut a: Vec<T> = x.row(s).to_vec();
        for (l, slot) in state.slots.iter().enumerate() {
            if let Some(m) = &noise.masks[l] {
                for (v, &k) in a.iter_mut().zip(m.row(s)) {
                    *v *= k;
                }
            }
            let w = &w_eff[l];
            let b = NetworkState::bias(params, slot);
            let mut z = vec![T::zero(); slot.fan_out];
            for o in 0..slot.fan_out {
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                let mut acc = b[o];
                for i in 0..slot.fan_in {
                    acc += row[i] * a[i];
                }
                z[o] = acc;
            }
            a_in[l] = a;
            if l + 1 < num_layers {
                a = z.iter().map(|&v| v.max(T::zero())).collect();
            } else {
                a = z.clone();
            }
            zs[l] = z;
        }
        let mu = a[0];
        let err = mu - y[s];
        let two = T::of_f64(2.0);
        let delta_mu = if gaussian_data {
            total += T::of_f64(0.5)
                * (err * err * inv_var + two * log_sigma_val + T::of_f64(std::f64::consts::TAU).ln());
            g_log_sigma += T::one() - err * err * inv_var;
            err * inv_var
        } else {
            total += err * err;
            two * err
        };

        // Backward sweep.
        let mut delta = vec![delta_mu];
        for l in (0..num_layers).rev() {
            let slot = &state.slots[l];
            let w = &w_eff[l];
            let ain = &a_in[l];
            // Parameter gradients for this layer.
            for o in 0..slot.fan_out {
                let d = delta[o];
                grad[slot.b + o] += d;
                let grow = &mut grad[slot.w + o * slot.fan_in..slot.w + (o + 1) * slot.fan_in];
                for i in 0..slot.fan_in {
                    grow[i] += d * ain[i];
                }
            }
            if l == 0 {
                break;
            }
            // Propagate to the previous layer's activations: through the
            // (sampled) weights, the dropout mask, then the ReLU.
            let mut prev = vec![T::zero(); slot.fan_in];
            for o in 0..slot.fan_out {
                let d = delta[o];
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                for i in 0..slot.fan_in {
                    prev[i] += row[i] * d;
                }
            }
            if let Some(m) = &noise.masks[l] {
                for (v, &k) in prev.iter_mut().zip(m.row(s)) {
                    *v *= k;
                }
            }
            let z_prev = &zs[l - 1];
            for i in 0..prev.len() {
                if z_prev[i] <= T::zero() {
                    prev[i] = T::zero();
                }
            }
            delta = prev;
        }
    }

    // Batch mean.
    let scale = T::one() / T::of_f64(nb as f64);
    total *= scale;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    if let Some(s) = state.log_sigma {
        grad[s] = if gaussian_data {
            g_log_sigma * scale
        } else {
            T::zero()
        };
    }

    // Sampled-weight gradients split into mean and noise-parameter parts:
    // dL/dw₀ = dL/dw, dL/dρ = dL/dw · ε · sigmoid(ρ).
    if sample_weights {
        for (l, slot) in state.slots.iter().enumerate() {
            let e = noise.eps[l].as_ref().expect("variational noise").as_slice();
            let rho = NetworkState::rho(params, slot);
            for i in 0..slot.w_len() {
                let dw = grad[slot.w + i];
                grad[slot.rho + i] = dw * e[i] * sigmoid(rho[i]);
            }
        }
    }

    // L2 penalty on mean weights.
    if l2_weight > T::zero() {
        let two = T::of_f64(2.0);
        for slot in &state.slots {
            for i in 0..slot.w_len() {
                let w = params[slot.w + i];
                total += l2_weight * w * w;
                grad[slot.w + i] += two * l2_weight * w;
            }
        }
    }

    // ELBO complexity term: closed-form KL(N(w₀, σ_w²) ‖ N(0, 1)) per weight.
    if kind == LossKind::Elbo && spec.variational {
        let half = T::of_f64(0.5);
        let mut kl = T::zero();
        for (l, slot) in state.slots.iter().enumerate() {
            let rho = NetworkState::rho(params, slot);
            let sp = &sp_rho[l];
            for i in 0..slot.w_len() {
                let w0 = params[slot.w + i];
                let sig = sp[i];
                kl += half * (sig * sig + w0 * w0 - T::one()) - sig.ln();
                grad[slot.w + i] += kl_scale * w0;
                grad[slot.rho + i] += kl_scale * (sig - T::one() / sig) * sigmoid(rho[i]);
            }
        }
        total += kl_scale * kl;
    }

    (total, grad)
}

/// Draws fresh noise and evaluates [`loss_with_noise`].
#[allow(clippy::too_many_arguments)]
pub fn loss<T: Scalar, R: Rng + ?Sized>(
    state: &NetworkState<T>,
    x: &Mat<T>,
    y: &[T],
    kind: LossKind,
    l2_weight: T,
    kl_scale: T,
    rng: &mut R,
) -> (T, Vec<T>) {
    let noise = draw_noise(&state.spec, x.rows(), rng);
    loss_with_noise(state, x, y, kind, l2_weight, kl_scale, &noise)
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

/// Mini-batch Adam settings. `kl_weight` scales the ELBO complexity term
/// (divided by the number of batches per epoch); it is ignored by
/// non-variational specs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_weight: f64,
    pub kl_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            l2_weight: 0.0,
            kl_weight: 1.0,
            seed: 0,
        }
    }
}

/// Trains a network from a fresh He initialization. Deterministic given the
/// seed: initialization, shuffles, dropout masks, and weight noise all
/// derive from one child stream.
///
/// The loss head follows the spec: variational → ELBO, Gaussian head → NLL,
/// otherwise MSE. For Gaussian heads `log σ_n` starts at `log(0.1·std(y))`
/// and is floored at `1e-4·std(y)` throughout training.
pub fn train<T: Scalar>(
    spec: &NetworkSpec,
    x: &Mat<T>,
    y: &[T],
    cfg: &TrainConfig,
) -> Result<NetworkState<T>, NnError> {
    spec.validate()?;
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(NnError::InvalidSpec(
            "epochs and batch_size must be ≥ 1".into(),
        ));
    }
    if x.rows() == 0 {
        return Err(NnError::InvalidSpec("empty training set".into()));
    }
    if x.rows() != y.len() {
        return Err(NnError::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if x.cols() != spec.input_dim {
        return Err(NnError::DimensionMismatch {
            expected: spec.input_dim,
            got: x.cols(),
        });
    }
    let n = x.rows();
    let mut rng = child_rng(cfg.seed, STREAM_NN_TRAIN);
    let mut state = NetworkState::init(spec, &mut rng)?;

    let kind = if spec.variational {
        LossKind::Elbo
    } else {
        match spec.head {
            Head::Gaussian => LossKind::Nll,
            Head::Deterministic => LossKind::Mse,
        }
    };

    let mean_y = y.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
    let std_y = (y
        .iter()
        .map(|v| (v.as_f64() - mean_y).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let ln_sigma_floor = (1e-4 * std_y.max(1e-8)).ln();
    if let Some(s) = state.log_sigma {
        state.params[s] = T::of_f64((0.1 * std_y.max(1e-8)).ln().max(ln_sigma_floor));
    }

    let num_batches = n.div_ceil(cfg.batch_size);
    let kl_scale = T::of_f64(cfg.kl_weight / num_batches as f64);
    let l2 = T::of_f64(cfg.l2_weight);
    let mut adam = Adam::new(state.params.len(), T::of_f64(cfg.learning_rate));
    let mut order: Vec<usize> = (0..n).collect();
    let mut xb = Mat::zeros(cfg.batch_size.min(n), x.cols());
    for epoch in 0..cfg.epochs {
        // Fisher-Yates reshuffle each epoch from the same stream.
        for i in (1..n).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let bs = batch.len();
            if xb.rows() != bs {
                xb = Mat::zeros(bs, x.cols());
            }
            let mut yb = Vec::with_capacity(bs);
            for (row, &idx) in batch.iter().enumerate() {
                xb.row_mut(row).copy_from_slice(x.row(idx));
                yb.push(y[idx]);
            }
            let noise = draw_noise(spec, bs, &mut rng);
            let (value, grad) = loss_with_noise(&state, &xb, &yb, kind, l2, kl_scale, &noise);
            let v = value.as_f64();
            if !v.is_finite() {
                return Err(NnError::DivergedLoss { epoch });
            }
            epoch_loss += v * bs as f64;
            adam.step(&mut state.params, &grad);
            if let Some(s) = state.log_sigma {
                if state.params[s].as_f64() < ln_sigma_floor {
                    state.params[s] = T::of_f64(ln_sigma_floor);
                }
            }
        }
        state.loss_history.push(epoch_loss / n as f64);
    }
    Ok(state)
}
