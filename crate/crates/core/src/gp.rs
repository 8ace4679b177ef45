//! Exact Gaussian-process regression with an ARD squared-exponential kernel.
//!
//! The kernel is
//!
//! ```text
//! k(a, a') = θ_σ · exp(−½ · Σ_i (a_i − a'_i)² / θ_i²)
//! ```
//!
//! with a signal variance `θ_σ`, one length scale `θ_i` per input dimension
//! (automatic relevance determination), and a homoskedastic noise standard
//! deviation `σ_n`. Hyperparameters are strictly positive and optimized in
//! log-space by multi-start Adam on the negative log marginal likelihood,
//! with analytic gradients. All dense linear algebra goes through a single
//! Cholesky factorization of `K + σ_n²I`; if factorization fails, an
//! additive jitter (relative to the mean diagonal) escalates from 1e-10 to
//! 1e-6 before the fit is declared degenerate.
//!
//! Predictions decompose into an epistemic standard deviation (posterior
//! variance of the latent function) and the aleatoric `σ_n`, reported
//! separately so downstream consumers can form the total variance
//! `σ_ε² + σ_n²` explicitly.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{self, Section};
use crate::mat::Mat;
use crate::opt::Adam;
use crate::rng::child_rng;
use crate::scalar::Scalar;
use crate::uq::Posterior;

/// Stream tag for the fit's restart initializations.
const STREAM_FIT: u64 = 0x4750_4649;

/// Jitter ladder (relative to the mean diagonal of `K + σ_n²I`) tried when
/// the plain Cholesky factorization fails.
const JITTERS: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Pre-clamp tolerance for negative posterior variances, relative to `θ_σ`.
const VARIANCE_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GpError {
    /// `K + σ_n²I` stayed non-positive-definite through the jitter ladder.
    #[error("Cholesky factorization failed even with relative jitter {jitter:.1e}")]
    CholeskyFailure { jitter: f64 },

    /// Every optimizer restart diverged or failed to factorize.
    #[error("all {restarts} optimizer restarts failed")]
    AllStartsFailed { restarts: usize },

    /// Inputs, outputs, or query dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The request itself is malformed (too few points, empty config, ...).
    #[error("invalid request: {0}")]
    InvalidRequest(String),

    /// Snapshot I/O failed.
    #[error(transparent)]
    Container(#[from] container::ContainerError),
}

/// ARD squared-exponential hyperparameters. All fields strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams<T> {
    /// Signal variance `θ_σ` (output units squared).
    pub theta_sigma: T,
    /// Per-dimension length scales `θ_i` (input units).
    pub theta: Vec<T>,
    /// Aleatoric noise standard deviation `σ_n` (output units).
    pub sigma_n: T,
}

impl<T: Scalar> GpHyperparams<T> {
    /// Packs the hyperparameters as `[log θ_σ, log θ_1.., log σ_n]`.
    pub fn to_log(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.theta.len() + 2);
        v.push(self.theta_sigma.ln());
        v.extend(self.theta.iter().map(|t| t.ln()));
        v.push(self.sigma_n.ln());
        v
    }

    /// Inverse of [`to_log`](Self::to_log) for `dim` input dimensions.
    pub fn from_log(dim: usize, log: &[T]) -> Self {
        assert_eq!(log.len(), dim + 2, "log-parameter vector length");
        Self {
            theta_sigma: log[0].exp(),
            theta: log[1..=dim].iter().map(|l| l.exp()).collect(),
            sigma_n: log[dim + 1].exp(),
        }
    }
}

/// ARD squared-exponential kernel evaluation.
pub fn kernel<T: Scalar>(a1: &[T], a2: &[T], hp: &GpHyperparams<T>) -> T {
    assert_eq!(a1.len(), hp.theta.len(), "input dimension");
    assert_eq!(a2.len(), hp.theta.len(), "input dimension");
    let mut q = T::zero();
    for i in 0..a1.len() {
        let d = (a1[i] - a2[i]) / hp.theta[i];
        q += d * d;
    }
    hp.theta_sigma * (-q / T::of_f64(2.0)).exp()
}

/// Fitted posterior state: the training set plus the factorized Gram matrix.
#[derive(Debug, Clone)]
pub struct GpPosterior<T> {
    /// Training inputs, one row per point.
    pub inputs: Mat<T>,
    /// Training outputs.
    pub outputs: Vec<T>,
    /// Lower-triangular Cholesky factor of `K + σ_n²I` (+ jitter if any).
    pub chol: Mat<T>,
    /// Precomputed weights `(K + σ_n²I)⁻¹ Y`.
    pub weights: Vec<T>,
    /// Relative jitter that was needed to factorize (0 for clean fits).
    pub jitter: f64,
}

/// A fitted GP: hyperparameters plus posterior state and fit diagnostics.
#[derive(Debug, Clone)]
pub struct GpModel<T> {
    pub hyperparams: GpHyperparams<T>,
    pub posterior: GpPosterior<T>,
    /// NLL of the winning restart's best iterate.
    pub final_nll: f64,
    /// Accepted (strictly improving) NLL values of the winning restart, in
    /// order. Empty for models built directly from fixed hyperparameters or
    /// loaded from a snapshot.
    pub nll_history: Vec<f64>,
}

/// Multi-start optimizer settings for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpFitConfig {
    pub restarts: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for GpFitConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            iterations: 2000,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Dense linear algebra (lower-triangular throughout).
// ---------------------------------------------------------------------------

/// In-place Cholesky factorization; on success the lower triangle holds `L`
/// and the strict upper triangle is zeroed. Returns `false` when a pivot is
/// non-positive or non-finite.
fn cholesky_in_place<T: Scalar>(a: &mut Mat<T>) -> bool {
    let n = a.rows();
    debug_assert_eq!(a.cols(), n);
    let m = a.as_mut_slice();
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            let l = m[j * n + k];
            d -= l * l;
        }
        if !(d > T::zero()) || !d.is_finite() {
            return false;
        }
        let ljj = d.sqrt();
        m[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= m[i * n + k] * m[j * n + k];
            }
            m[i * n + j] = s / ljj;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            m[i * n + j] = T::zero();
        }
    }
    true
}

/// Forward substitution `L x = b`.
fn solve_lower<T: Scalar>(l: &Mat<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let m = l.as_slice();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= m[i * n + k] * x[k];
        }
        x[i] = s / m[i * n + i];
    }
    x
}

/// Backward substitution `Lᵀ x = b`.
fn solve_lower_transpose<T: Scalar>(l: &Mat<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let m = l.as_slice();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= m[k * n + i] * x[k];
        }
        x[i] = s / m[i * n + i];
    }
    x
}

/// Inverse of a lower-triangular matrix (also lower-triangular).
fn invert_lower<T: Scalar>(l: &Mat<T>) -> Mat<T> {
    let n = l.rows();
    let lm = l.as_slice();
    let mut out = Mat::zeros(n, n);
    let om = out.as_mut_slice();
    for j in 0..n {
        om[j * n + j] = T::one() / lm[j * n + j];
        for i in (j + 1)..n {
            let mut s = T::zero();
            for k in j..i {
                s += lm[i * n + k] * om[k * n + j];
            }
            om[i * n + j] = -s / lm[i * n + i];
        }
    }
    out
}

/// Cross-covariance matrix `K(A, A)` without the noise diagonal.
fn gram<T: Scalar>(a: &Mat<T>, hp: &GpHyperparams<T>) -> Mat<T> {
    let n = a.rows();
    let mut k = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel(a.row(i), a.row(j), hp);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Adds `σ_n²` (plus a rung of the jitter ladder when needed) to the
/// diagonal of `K` and factorizes. Returns the factor and the relative
/// jitter that made it succeed.
fn factor_gram<T: Scalar>(
    k: &Mat<T>,
    sigma_n: T,
    theta_sigma: T,
) -> Result<(Mat<T>, f64), GpError> {
    let n = k.rows();
    let noise = sigma_n * sigma_n;
    // Mean diagonal of K + σ_n²I; for a stationary kernel this is θ_σ + σ_n².
    let scale = (theta_sigma + noise).as_f64();
    for &jitter in &JITTERS {
        let mut c = k.clone();
        let bump = noise + T::of_f64(jitter * scale);
        for i in 0..n {
            c[(i, i)] += bump;
        }
        if cholesky_in_place(&mut c) {
            return Ok((c, jitter));
        }
    }
    Err(GpError::CholeskyFailure {
        jitter: *JITTERS.last().expect("non-empty ladder"),
    })
}

// ---------------------------------------------------------------------------
// Negative log marginal likelihood.
// ---------------------------------------------------------------------------

/// One NLL evaluation: value, gradient with respect to the log-space
/// parameter vector `[log θ_σ, log θ_i.., log σ_n]`, and the jitter used.
#[derive(Debug, Clone)]
pub struct NllEval<T> {
    pub value: T,
    pub grad_log: Vec<T>,
    pub jitter: f64,
}

/// Negative log marginal likelihood
/// `½ Yᵀ(K+σ_n²I)⁻¹Y + ½ log|K+σ_n²I| + (n/2) log 2π`.
pub fn nll<T: Scalar>(hp: &GpHyperparams<T>, a: &Mat<T>, y: &[T]) -> Result<T, GpError> {
    check_training_shapes(hp, a, y)?;
    let k = gram(a, hp);
    let (l, _) = factor_gram(&k, hp.sigma_n, hp.theta_sigma)?;
    let alpha = solve_lower_transpose(&l, &solve_lower(&l, y));
    Ok(nll_value(&l, y, &alpha))
}

/// NLL plus its analytic log-space gradient.
///
/// With `C = K + σ_n²I`, `α = C⁻¹Y` and `W = C⁻¹ − ααᵀ`, each component is
/// `½·Σ_{ab} W_ab (∂C/∂log θ_j)_ab`, where `∂C/∂log θ_σ = K`,
/// `∂C/∂log θ_i = K ∘ D_i` with `D_i,ab = (a_i−b_i)²/θ_i²`, and
/// `∂C/∂log σ_n = 2σ_n²I`.
pub fn nll_with_grad<T: Scalar>(
    hp: &GpHyperparams<T>,
    a: &Mat<T>,
    y: &[T],
) -> Result<NllEval<T>, GpError> {
    check_training_shapes(hp, a, y)?;
    let n = a.rows();
    let d = a.cols();
    let k = gram(a, hp);
    let (l, jitter) = factor_gram(&k, hp.sigma_n, hp.theta_sigma)?;
    let alpha = solve_lower_transpose(&l, &solve_lower(&l, y));
    let value = nll_value(&l, y, &alpha);

    // C⁻¹ = L⁻ᵀ L⁻¹ via the explicit triangular inverse.
    let linv = invert_lower(&l);
    let lm = linv.as_slice();
    let mut cinv = Mat::zeros(n, n);
    {
        let cm = cinv.as_mut_slice();
        for i in 0..n {
            for j in 0..=i {
                let mut s = T::zero();
                // (L⁻ᵀL⁻¹)_ij = Σ_k L⁻¹_ki L⁻¹_kj, nonzero for k ≥ max(i,j).
                for r in i..n {
                    s += lm[r * n + i] * lm[r * n + j];
                }
                cm[i * n + j] = s;
                cm[j * n + i] = s;
            }
        }
    }

    let half = T::of_f64(0.5);
    let mut g_sigma = T::zero();
    let mut g_theta = vec![T::zero(); d];
    let mut tr_w = T::zero();
    let km = k.as_slice();
    let cm = cinv.as_slice();
    for i in 0..n {
        let ai = a.row(i);
        for j in 0..n {
            let aj = a.row(j);
            let w = cm[i * n + j] - alpha[i] * alpha[j];
            if i == j {
                tr_w += w;
            }
            let wk = w * km[i * n + j];
            g_sigma += wk;
            for t in 0..d {
                let dt = (ai[t] - aj[t]) / hp.theta[t];
                g_theta[t] += wk * dt * dt;
            }
        }
    }
    let mut grad_log = Vec::with_capacity(d + 2);
    grad_log.push(half * g_sigma);
    grad_log.extend(g_theta.into_iter().map(|g| half * g));
    grad_log.push(hp.sigma_n * hp.sigma_n * tr_w);
    Ok(NllEval {
        value,
        grad_log,
        jitter,
    })
}

fn nll_value<T: Scalar>(l: &Mat<T>, y: &[T], alpha: &[T]) -> T {
    let n = y.len();
    let half = T::of_f64(0.5);
    let data_fit: T = y.iter().zip(alpha).map(|(&yi, &ai)| yi * ai).sum();
    let logdet: T = (0..n).map(|i| l[(i, i)].ln()).sum();
    half * data_fit + logdet + T::of_f64(n as f64 / 2.0) * T::of_f64(std::f64::consts::TAU).ln()
}

fn check_training_shapes<T: Scalar>(
    hp: &GpHyperparams<T>,
    a: &Mat<T>,
    y: &[T],
) -> Result<(), GpError> {
    if a.rows() != y.len() {
        return Err(GpError::DimensionMismatch {
            expected: a.rows(),
            got: y.len(),
        });
    }
    if hp.theta.len() != a.cols() {
        return Err(GpError::DimensionMismatch {
            expected: a.cols(),
            got: hp.theta.len(),
        });
    }
    if a.rows() == 0 {
        return Err(GpError::InvalidRequest("empty training set".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Fitting.
// ---------------------------------------------------------------------------

struct RestartOutcome<T> {
    nll: f64,
    log_params: Vec<T>,
    history: Vec<f64>,
}

impl<T: Scalar> GpModel<T> {
    /// Builds the posterior state for fixed hyperparameters without any
    /// optimization. Useful for oracles and for reloading snapshots.
    pub fn from_hyperparams(
        hp: GpHyperparams<T>,
        inputs: Mat<T>,
        outputs: Vec<T>,
    ) -> Result<Self, GpError> {
        check_training_shapes(&hp, &inputs, &outputs)?;
        let k = gram(&inputs, &hp);
        let (chol, jitter) = factor_gram(&k, hp.sigma_n, hp.theta_sigma)?;
        let weights = solve_lower_transpose(&chol, &solve_lower(&chol, &outputs));
        let final_nll = nll_value(&chol, &outputs, &weights).as_f64();
        Ok(Self {
            hyperparams: hp,
            posterior: GpPosterior {
                inputs,
                outputs,
                chol,
                weights,
                jitter,
            },
            final_nll,
            nll_history: Vec::new(),
        })
    }

    /// Number of input dimensions the model was trained on.
    pub fn input_dim(&self) -> usize {
        self.posterior.inputs.cols()
    }
}

/// Fits hyperparameters by multi-start Adam on the NLL in log-space and
/// returns the best run's model. Restarts run concurrently; the winner is
/// the lowest final NLL (ties broken by restart index, so the result is
/// independent of scheduling).
pub fn fit<T: Scalar>(a: &Mat<T>, y: &[T], cfg: &GpFitConfig) -> Result<GpModel<T>, GpError> {
    if a.rows() < 2 {
        return Err(GpError::InvalidRequest(
            "fit needs at least two training points".into(),
        ));
    }
    if a.rows() != y.len() {
        return Err(GpError::DimensionMismatch {
            expected: a.rows(),
            got: y.len(),
        });
    }
    if cfg.restarts == 0 || cfg.iterations == 0 {
        return Err(GpError::InvalidRequest(
            "restarts and iterations must be positive".into(),
        ));
    }
    let d = a.cols();
    let n = a.rows();

    // Per-dimension input ranges and output moments drive the restart
    // initialization windows.
    let mut ranges = vec![1.0_f64; d];
    for (t, range) in ranges.iter_mut().enumerate() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let v = a[(i, t)].as_f64();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi > lo {
            *range = hi - lo;
        }
    }
    let mean_y = y.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
    let var_y = y
        .iter()
        .map(|v| (v.as_f64() - mean_y).powi(2))
        .sum::<f64>()
        / n as f64;
    let std_y = var_y.sqrt();
    // Noise floor keeps noiseless fits numerically stable instead of letting
    // σ_n collapse to zero and destroy the conditioning of K + σ_n²I.
    let sigma_n_floor = 1e-6 * std_y.max(1e-6);
    let ln_floor = sigma_n_floor.ln();

    let outcomes: Vec<Option<RestartOutcome<T>>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|idx| run_restart(a, y, cfg, idx, &ranges, var_y, std_y, ln_floor))
        .collect();

    let mut best: Option<(usize, &RestartOutcome<T>)> = None;
    for (idx, outcome) in outcomes.iter().enumerate() {
        if let Some(o) = outcome {
            if best.map_or(true, |(_, b)| o.nll < b.nll) {
                best = Some((idx, o));
            }
        }
    }
    let Some((_, winner)) = best else {
        return Err(GpError::AllStartsFailed {
            restarts: cfg.restarts,
        });
    };

    let hp = GpHyperparams::from_log(d, &winner.log_params);
    let mut model = GpModel::from_hyperparams(hp, a.clone(), y.to_vec())?;
    model.final_nll = winner.nll;
    model.nll_history = winner.history.clone();
    Ok(model)
}

#[allow(clippy::too_many_arguments)]
fn run_restart<T: Scalar>(
    a: &Mat<T>,
    y: &[T],
    cfg: &GpFitConfig,
    idx: usize,
    ranges: &[f64],
    var_y: f64,
    std_y: f64,
    ln_floor: f64,
) -> Option<RestartOutcome<T>> {
    let d = a.cols();
    let mut rng = child_rng(cfg.seed, STREAM_FIT.wrapping_add(idx as u64));
    let uni = |rng: &mut rand_chacha::ChaCha8Rng, lo: f64, hi: f64| {
        T::of_f64(lo + (hi - lo) * rng.random::<f64>())
    };

    // log θ_i ~ U[log 0.1·range, log 10·range]; log θ_σ around the output
    // variance; log σ_n around 0.1·output std.
    let mut logp = Vec::with_capacity(d + 2);
    logp.push(T::of_f64(var_y.max(1e-12).ln()) + uni(&mut rng, -1.0, 1.0));
    for &r in ranges {
        logp.push(uni(&mut rng, (0.1 * r).ln(), (10.0 * r).ln()));
    }
    logp.push(T::of_f64((0.1 * std_y).max(sigma_floor(ln_floor)).ln()) + uni(&mut rng, -1.0, 1.0));
    clamp_noise(&mut logp, d, ln_floor);

    let mut adam = Adam::new(d + 2, T::of_f64(cfg.learning_rate));
    let mut best: Option<(f64, Vec<T>)> = None;
    let mut history = Vec::new();
    for iter in 0..=cfg.iterations {
        let hp = GpHyperparams::from_log(d, &logp);
        let Ok(eval) = nll_with_grad(&hp, a, y) else {
            break;
        };
        let value = eval.value.as_f64();
        if !value.is_finite() || eval.grad_log.iter().any(|g| !g.is_finite()) {
            break;
        }
        if best.as_ref().map_or(true, |(b, _)| value < *b) {
            best = Some((value, logp.clone()));
            history.push(value);
        }
        if iter == cfg.iterations {
            break;
        }
        adam.step(&mut logp, &eval.grad_log);
        clamp_noise(&mut logp, d, ln_floor);
    }
    best.map(|(nll, log_params)| RestartOutcome {
        nll,
        log_params,
        history,
    })
}

fn sigma_floor(ln_floor: f64) -> f64 {
    ln_floor.exp()
}

fn clamp_noise<T: Scalar>(logp: &mut [T], d: usize, ln_floor: f64) {
    let floor = T::of_f64(ln_floor);
    if logp[d + 1] < floor {
        logp[d + 1] = floor;
    }
}

// ---------------------------------------------------------------------------
// Prediction.
// ---------------------------------------------------------------------------

/// Posterior prediction at one query point:
/// `μ = k_*ᵀ(K+σ_n²I)⁻¹Y`, `σ_ε² = θ_σ − ‖L⁻¹k_*‖²`, aleatoric `σ_n`.
///
/// The epistemic variance is clamped at zero; pre-clamp values below
/// `−1e-8·θ_σ` would indicate a broken factorization and trip a debug
/// assertion.
///
/// # Panics
///
/// Panics if the query length differs from the training input dimension.
pub fn predict<T: Scalar>(model: &GpModel<T>, query: &[T]) -> Posterior<T> {
    let state = &model.posterior;
    let hp = &model.hyperparams;
    assert_eq!(query.len(), state.inputs.cols(), "query dimension");
    let n = state.inputs.rows();
    let mut kstar = Vec::with_capacity(n);
    for i in 0..n {
        kstar.push(kernel(query, state.inputs.row(i), hp));
    }
    let mu: T = kstar
        .iter()
        .zip(&state.weights)
        .map(|(&k, &w)| k * w)
        .sum();
    let v = solve_lower(&state.chol, &kstar);
    let explained: T = v.iter().map(|&x| x * x).sum();
    let raw = hp.theta_sigma - explained;
    debug_assert!(
        raw.as_f64() >= -VARIANCE_TOL * hp.theta_sigma.as_f64(),
        "posterior variance {raw} below the numerical-noise band"
    );
    let sigma_eps = raw.max(T::zero()).sqrt();
    Posterior {
        mu,
        sigma_eps,
        sigma_n: hp.sigma_n,
    }
}

// ---------------------------------------------------------------------------
// Snapshots.
// ---------------------------------------------------------------------------

/// Snapshot metadata persisted alongside the numeric sections.
#[derive(Debug, Serialize, Deserialize)]
struct SnapshotMeta {
    kind: String,
    dim: usize,
    final_nll: f64,
}

impl<T: Scalar> GpModel<T> {
    /// Persists hyperparameters and training data in the container format.
    /// The Cholesky factor is cheap to rebuild and is not stored.
    pub fn save(&self, path: &std::path::Path) -> Result<(), GpError> {
        let d = self.input_dim();
        let n = self.posterior.outputs.len();
        let meta = serde_json::to_value(SnapshotMeta {
            kind: "gp-model".into(),
            dim: d,
            final_nll: self.final_nll,
        })
        .expect("snapshot meta serializes");
        let mut raw: Vec<f64> = Vec::with_capacity(d + 2);
        raw.push(self.hyperparams.theta_sigma.as_f64());
        raw.extend(self.hyperparams.theta.iter().map(|v| v.as_f64()));
        raw.push(self.hyperparams.sigma_n.as_f64());
        let inputs: Vec<f64> = self
            .posterior
            .inputs
            .as_slice()
            .iter()
            .map(|v| v.as_f64())
            .collect();
        let outputs: Vec<f64> = self.posterior.outputs.iter().map(|v| v.as_f64()).collect();
        let sections = vec![
            Section::new("hyperparams", 1, d + 2, raw),
            Section::new("inputs", n, d, inputs),
            Section::new("outputs", n, 1, outputs),
        ];
        container::write(path, meta, &sections)?;
        Ok(())
    }

    /// Loads a snapshot written by [`save`](Self::save), rebuilding the
    /// factorization from the stored training data.
    pub fn load(path: &std::path::Path) -> Result<Self, GpError> {
        let (meta_value, sections) = container::read(path)?;
        let meta: SnapshotMeta = serde_json::from_value(meta_value).map_err(|e| {
            GpError::InvalidRequest(format!("snapshot metadata does not parse: {e}"))
        })?;
        if meta.kind != "gp-model" {
            return Err(GpError::InvalidRequest(format!(
                "expected a gp-model snapshot, found kind {:?}",
                meta.kind
            )));
        }
        let find = |name: &str| {
            sections
                .iter()
                .find(|s| s.name == name)
                .ok_or_else(|| GpError::InvalidRequest(format!("snapshot lacks section {name}")))
        };
        let raw = find("hyperparams")?;
        let inputs = find("inputs")?;
        let outputs = find("outputs")?;
        if raw.cols != meta.dim + 2 || inputs.cols != meta.dim {
            return Err(GpError::InvalidRequest(
                "snapshot sections disagree with the recorded dimension".into(),
            ));
        }
        let hp = GpHyperparams {
            theta_sigma: T::of_f64(raw.data[0]),
            theta: raw.data[1..=meta.dim].iter().map(|&v| T::of_f64(v)).collect(),
            sigma_n: T::of_f64(raw.data[meta.dim + 1]),
        };
        let a = Mat::from_flat(
            inputs.rows,
            inputs.cols,
            inputs.data.iter().map(|&v| T::of_f64(v)).collect(),
        );
        let y: Vec<T> = outputs.data.iter().map(|&v| T::of_f64(v)).collect();
        let mut model = Self::from_hyperparams(hp, a, y)?;
        model.final_nll = meta.final_nll;
        Ok(model)
    }
}
