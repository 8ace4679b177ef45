//! Uncertainty-quantification schemes over one common interface.
//!
//! Every surrogate, whatever its machinery, answers a query with a
//! [`Posterior`]: a mean `μ`, an epistemic standard deviation `σ_ε`
//! (model uncertainty — reducible with more data), and an aleatoric
//! standard deviation `σ_n` (noise the model attributes to the data
//! itself). Eight variants are wired up:
//!
//! | variant | machinery                         | σ_ε | σ_n |
//! |---------|-----------------------------------|-----|-----|
//! | `gp`    | exact GP regression               | yes | yes |
//! | `nn`    | plain NN, MSE                     | —   | —   |
//! | `gnn`   | NN, Gaussian head                 | —   | yes |
//! | `enn`   | ensemble of NNs                   | yes | —   |
//! | `egnn`  | ensemble of Gaussian-head NNs     | yes | yes |
//! | `bnn`   | variational BNN, Gaussian head    | yes | yes |
//! | `dnn`   | MC-dropout NN                     | yes | —   |
//! | `dgnn`  | MC-dropout NN, Gaussian head      | yes | yes |
//!
//! Ensemble statistics follow the standard decomposition: the predictive
//! mean is the member average, `σ_ε²` is the *unbiased* variance of the
//! member means, and (for Gaussian-head members) `σ_n²` is the average of
//! the member noise variances.
//!
//! Network variants standardize inputs per feature and targets to zero
//! mean / unit variance from training statistics; predictions are mapped
//! back, so the caller always works in problem units. The GP operates on
//! raw coordinates — its ARD length scales play that role.
//!
//! Determinism: member trainings and stochastic forward passes draw from
//! child streams of the caller's seeds, so any (model, query, prediction
//! seed) triple reproduces bitwise, independent of thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{self, ContainerError, Section};
use crate::gp::{self, GpError, GpFitConfig, GpModel};
use crate::mat::Mat;
use crate::nn::NnError;
use crate::rng::{child_rng, child_seed};
use crate::scalar::Scalar;

/// Stream tag for member-training seeds (offset by the member index).
pub const STREAM_UQ_MEMBER: u64 = 0x5551_4d45;
/// Stream tag separating prediction randomness from everything else.
pub const STREAM_UQ_PREDICT: u64 = 0x5551_5052;
/// Stream tag for per-query seeds in batch prediction (offset by row).
pub const STREAM_UQ_QUERY: u64 = 0x5551_5159;

#[derive(Debug, Error)]
pub enum UqError {
    /// Ensemble statistics need at least two members / passes.
    #[error("ensemble needs at least two members, got {n_e}")]
    DegenerateEnsemble { n_e: usize },

    /// The variant cannot produce the requested epistemic quantity.
    #[error("variant {variant} provides no epistemic uncertainty")]
    NoEpistemicUQ { variant: SurrogateKind },

    #[error("expected input dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error(transparent)]
    Gp(#[from] GpError),

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Container(#[from] ContainerError),
}

/// A predictive distribution at one query point, decomposed into an
/// epistemic part `σ_ε` (model uncertainty) and an aleatoric part `σ_n`
/// (attributed data noise). Variants lacking a capability report that
/// component as exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior<T> {
    pub mu: T,
    pub sigma_eps: T,
    pub sigma_n: T,
}

impl<T: Scalar> Posterior<T> {
    /// Total predictive variance `σ_ε² + σ_n²`.
    pub fn total_variance(&self) -> T {
        self.sigma_eps * self.sigma_eps + self.sigma_n * self.sigma_n
    }
}

// ---------------------------------------------------------------------------
// Variants and their capabilities.
// ---------------------------------------------------------------------------

/// The eight UQ schemes under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateKind {
    Gp,
    Nn,
    Gnn,
    Enn,
    Egnn,
    Bnn,
    Dnn,
    Dgnn,
}

impl SurrogateKind {
    pub const ALL: [SurrogateKind; 8] = [
        SurrogateKind::Gp,
        SurrogateKind::Nn,
        SurrogateKind::Gnn,
        SurrogateKind::Enn,
        SurrogateKind::Egnn,
        SurrogateKind::Bnn,
        SurrogateKind::Dnn,
        SurrogateKind::Dgnn,
    ];

    /// Whether the variant reports epistemic uncertainty (`σ_ε > 0`).
    pub fn has_epistemic(self) -> bool {
        !matches!(self, SurrogateKind::Nn | SurrogateKind::Gnn)
    }

    /// Whether the variant reports aleatoric uncertainty (`σ_n > 0`).
    pub fn has_aleatoric(self) -> bool {
        matches!(
            self,
            SurrogateKind::Gp
                | SurrogateKind::Gnn
                | SurrogateKind::Egnn
                | SurrogateKind::Bnn
                | SurrogateKind::Dgnn
        )
    }

    /// Display label for tables and plots.
    pub fn label(self) -> &'static str {
        match self {
            SurrogateKind::Gp => "GP",
            SurrogateKind::Nn => "NN",
            SurrogateKind::Gnn => "G-NN",
            SurrogateKind::Enn => "ENN",
            SurrogateKind::Egnn => "EG-NN",
            SurrogateKind::Bnn => "BNN",
            SurrogateKind::Dnn => "D-NN",
            SurrogateKind::Dgnn => "DG-NN",
        }
    }

    /// Lowercase config/CLI token (`gp`, `nn`, `gnn`, ...).
    pub fn token(self) -> &'static str {
        match self {
            SurrogateKind::Gp => "gp",
            SurrogateKind::Nn => "nn",
            SurrogateKind::Gnn => "gnn",
            SurrogateKind::Enn => "enn",
            SurrogateKind::Egnn => "egnn",
            SurrogateKind::Bnn => "bnn",
            SurrogateKind::Dnn => "dnn",
            SurrogateKind::Dgnn => "dgnn",
        }
    }
}

impl std::fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

impl std::str::FromStr for SurrogateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SurrogateKind::ALL
            .iter()
            .copied()
            .find(|k| k.token() == s)
            .ok_or_else(|| {
                format!("unknown model kind {s:?} (expected one of gp, nn, gnn, enn, egnn, bnn, dnn, dgnn)")
            })
    }
}

/// How a variant realizes its ensemble, if it has one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Independently trained networks (ENN / EG-NN).
    IndependentNets,
    /// Repeated stochastic forward passes through one dropout network.
    DropoutPasses,
    /// Repeated weight draws from one variational posterior.
    BnnPasses,
}

/// Ensemble bookkeeping attached to a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Member count: trained networks for [`EnsembleKind::IndependentNets`],
    /// default forward passes otherwise.
    pub n_e: usize,
    /// Training seeds of the independent members (empty for pass-based
    /// ensembles, whose randomness is drawn at prediction time).
    pub member_seeds: Vec<u64>,
    pub kind: EnsembleKind,
}

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

/// Everything needed to train one surrogate. Fields irrelevant to the
/// chosen `kind` are ignored (e.g. `gp` for network variants).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub kind: SurrogateKind,
    /// Hidden-layer widths for network variants.
    pub hidden: Vec<usize>,
    /// Dropout rate for the MC-dropout variants.
    pub dropout_rate: f64,
    /// Trained ensemble size for `enn`/`egnn` (must be ≥ 2).
    pub n_e: usize,
    /// Default stochastic forward passes for `dnn`/`dgnn`/`bnn`.
    pub passes: usize,
    /// Standardize inputs per feature from training statistics. Off for
    /// ROM coefficients (already scaled by construction); on for wide
    /// functional traces, whose per-point scales vary.
    pub standardize_inputs: bool,
    pub train: crate::nn::TrainConfig,
    pub gp: GpFitConfig,
}

impl SurrogateConfig {
    /// Defaults for each variant: 4×64 hidden layers, ensemble size 8,
    /// 50 dropout passes, 100 BNN weight draws, dropout rate 0.5, and L2
    /// regularization only for the independent ensembles (the spread of an
    /// unregularized ensemble conflates fit quality with disagreement).
    pub fn for_kind(kind: SurrogateKind) -> Self {
        let mut train = crate::nn::TrainConfig::default();
        if matches!(kind, SurrogateKind::Enn | SurrogateKind::Egnn) {
            train.l2_weight = 1e-4;
        }
        Self {
            kind,
            hidden: vec![64; 4],
            dropout_rate: match kind {
                SurrogateKind::Dnn | SurrogateKind::Dgnn => 0.5,
                _ => 0.0,
            },
            n_e: match kind {
                SurrogateKind::Enn | SurrogateKind::Egnn => 8,
                _ => 1,
            },
            passes: match kind {
                SurrogateKind::Dnn | SurrogateKind::Dgnn => 50,
                SurrogateKind::Bnn => 100,
                _ => 1,
            },
            standardize_inputs: false,
            train,
            gp: GpFitConfig::default(),
        }
    }

    /// Re-seeds both the network and GP training streams.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.gp.seed = seed;
        self
    }
}

/// Per-feature affine map to zero mean / unit variance, frozen from the
/// training set. Degenerate features get their std floored so constant
/// columns pass through as zeros instead of NaNs.
///
/// Targets are always standardized for network training; inputs only when
/// asked (functional traces) — otherwise the input map is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub x_mean: Vec<T>,
    pub x_std: Vec<T>,
    pub y_mean: T,
    pub y_std: T,
}

impl<T: Scalar> Standardizer<T> {
    pub const STD_FLOOR: f64 = 1e-8;

    pub fn fit(x: &Mat<T>, y: &[T], standardize_inputs: bool) -> Self {
        let n = T::of_f64(x.rows() as f64);
        let floor = T::of_f64(Self::STD_FLOOR);
        let d = x.cols();
        let mut x_mean = vec![T::zero(); d];
        let mut x_std = vec![T::one(); d];
        if standardize_inputs {
            for row in x.iter_rows() {
                for (m, &v) in x_mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            for m in x_mean.iter_mut() {
                *m /= n;
            }
            for s in x_std.iter_mut() {
                *s = T::zero();
            }
            for row in x.iter_rows() {
                for ((s, &m), &v) in x_std.iter_mut().zip(&x_mean).zip(row) {
                    *s += (v - m) * (v - m);
                }
            }
            for s in x_std.iter_mut() {
                *s = (*s / n).sqrt().max(floor);
            }
        }
        let y_mean = y.iter().copied().sum::<T>() / n;
        let y_var = y.iter().map(|&v| (v - y_mean) * (v - y_mean)).sum::<T>() / n;
        let y_std = y_var.sqrt().max(floor);
        Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
        }
    }

    pub fn transform_query(&self, q: &[T]) -> Vec<T> {
        q.iter()
            .zip(&self.x_mean)
            .zip(&self.x_std)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }

    pub fn transform_inputs(&self, x: &Mat<T>) -> Mat<T> {
        let mut out = x.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for ((v, &m), &s) in row.iter_mut().zip(&self.x_mean).zip(&self.x_std) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn transform_targets(&self, y: &[T]) -> Vec<T> {
        y.iter().map(|&v| (v - self.y_mean) / self.y_std).collect()
    }

    /// Maps a standardized predictive mean back to problem units.
    pub fn mu_to_output(&self, mu: T) -> T {
        mu * self.y_std + self.y_mean
    }

    /// Maps a standardized standard deviation back to problem units.
    pub fn sigma_to_output(&self, s: T) -> T {
        s * self.y_std
    }
}

// ---------------------------------------------------------------------------
// Ensemble statistics.
// ---------------------------------------------------------------------------

/// Unbiased standard deviation of member means, with an exact-zero short
/// circuit: bitwise-identical members produce `σ_ε = 0` exactly rather
/// than the rounding dust of a variance formula.
fn spread_of_means<T: Scalar>(mus: &[T]) -> T {
    let first = mus[0];
    if mus.iter().all(|&v| v == first) {
        return T::zero();
    }
    let n = T::of_f64(mus.len() as f64);
    let mean = mus.iter().copied().sum::<T>() / n;
    let var = mus.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one());
    var.sqrt()
}

/// Combines deterministic member predictions `{y_j}`:
/// `μ = mean(y_j)`, `σ_ε² = Σ(y_j − μ)²/(n_e − 1)`, `σ_n = 0`.
pub fn ensemble_predict_deterministic<T: Scalar>(outputs: &[T]) -> Result<Posterior<T>, UqError> {
    if outputs.len() < 2 {
        return Err(UqError::DegenerateEnsemble { n_e: outputs.len() });
    }
    let n = T::of_f64(outputs.len() as f64);
    let mu = outputs.iter().copied().sum::<T>() / n;
    Ok(Posterior {
        mu,
        sigma_eps: spread_of_means(outputs),
        sigma_n: T::zero(),
    })
}

/// Combines Gaussian member predictions `{(μ_j, σ_n,j)}`:
/// `μ = mean(μ_j)`, `σ_ε²` the unbiased variance of the `μ_j`, and
/// `σ_n² = mean(σ_n,j²)` — disagreement between members is epistemic,
/// their average attributed noise is aleatoric.
pub fn ensemble_predict_gaussian<T: Scalar>(outputs: &[(T, T)]) -> Result<Posterior<T>, UqError> {
    if outputs.len() < 2 {
        return Err(UqError::DegenerateEnsemble {
            n_e: outputs.len(),
        });
    }
    let n = T::of_f64(outputs.len() as f64);
    let mus: Vec<T> = outputs.iter().map(|&(m, _)| m).collect();
    let mu = mus.iter().copied().sum::<T>() / n;
    let noise_var = outputs.iter().map(|&(_, s)| s * s).sum::<T>() / n;
    Ok(Posterior {
        mu,
        sigma_eps: spread_of_means(&mus),
        sigma_n: noise_var.sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Inner<T> {
    Gp(GpModel<T>),
    Net(Vec<crate::nn::NetworkState<T>>),
}

/// A trained surrogate of any variant, ready to answer queries.
#[derive(Debug, Clone)]
pub struct SurrogateModel<T> {
    pub config: SurrogateConfig,
    /// Ensemble bookkeeping; `None` for GP/NN/G-NN.
    pub ensemble: Option<EnsembleConfig>,
    /// Input/target standardization; `None` for the GP.
    pub standardizer: Option<Standardizer<T>>,
    inner: Inner<T>,
}

/// Network architecture implied by a config (for a given input width).
fn net_spec_for(cfg: &SurrogateConfig, input_dim: usize) -> crate::nn::NetworkSpec {
    let head = if cfg.kind.has_aleatoric() {
        crate::nn::Head::Gaussian
    } else {
        crate::nn::Head::Deterministic
    };
    crate::nn::NetworkSpec {
        input_dim,
        hidden: cfg.hidden.clone(),
        activation: crate::nn::Activation::Relu,
        dropout_rate: match cfg.kind {
            SurrogateKind::Dnn | SurrogateKind::Dgnn => cfg.dropout_rate,
            _ => 0.0,
        },
        head,
        variational: cfg.kind == SurrogateKind::Bnn,
    }
}

/// Trains the surrogate described by `cfg` on `(x, y)`.
///
/// Independent ensemble members get distinct child seeds of the training
/// seed and are trained in parallel; results do not depend on scheduling.
pub fn train_surrogate<T: Scalar>(
    cfg: &SurrogateConfig,
    x: &Mat<T>,
    y: &[T],
) -> Result<SurrogateModel<T>, UqError> {
    if x.rows() == 0 {
        return Err(UqError::InvalidRequest("empty training set".into()));
    }
    if x.rows() != y.len() {
        return Err(UqError::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if cfg.kind == SurrogateKind::Gp {
        let model = gp::fit(x, y, &cfg.gp)?;
        return Ok(SurrogateModel {
            config: cfg.clone(),
            ensemble: None,
            standardizer: None,
            inner: Inner::Gp(model),
        });
    }

    let members = match cfg.kind {
        SurrogateKind::Enn | SurrogateKind::Egnn => cfg.n_e,
        _ => 1,
    };
    if matches!(cfg.kind, SurrogateKind::Enn | SurrogateKind::Egnn) && members < 2 {
        return Err(UqError::DegenerateEnsemble { n_e: members });
    }
    if matches!(
        cfg.kind,
        SurrogateKind::Dnn | SurrogateKind::Dgnn | SurrogateKind::Bnn
    ) && cfg.passes < 2
    {
        return Err(UqError::DegenerateEnsemble { n_e: cfg.passes });
    }

    let standardizer = Standardizer::fit(x, y, cfg.standardize_inputs);
    let xs = standardizer.transform_inputs(x);
    let ys = standardizer.transform_targets(y);
    let spec = net_spec_for(cfg, x.cols());
    let member_seeds: Vec<u64> = (0..members)
        .map(|j| child_seed(cfg.train.seed, STREAM_UQ_MEMBER + j as u64))
        .collect();
    let nets: Vec<crate::nn::NetworkState<T>> = member_seeds
        .par_iter()
        .map(|&seed| {
            let train_cfg = crate::nn::TrainConfig {
                seed,
                ..cfg.train
            };
            crate::nn::train(&spec, &xs, &ys, &train_cfg)
        })
        .collect::<Result<_, _>>()?;

    let ensemble = match cfg.kind {
        SurrogateKind::Enn | SurrogateKind::Egnn => Some(EnsembleConfig {
            n_e: members,
            member_seeds,
            kind: EnsembleKind::IndependentNets,
        }),
        SurrogateKind::Dnn | SurrogateKind::Dgnn => Some(EnsembleConfig {
            n_e: cfg.passes,
            member_seeds: Vec::new(),
            kind: EnsembleKind::DropoutPasses,
        }),
        SurrogateKind::Bnn => Some(EnsembleConfig {
            n_e: cfg.passes,
            member_seeds: Vec::new(),
            kind: EnsembleKind::BnnPasses,
        }),
        _ => None,
    };
    Ok(SurrogateModel {
        config: cfg.clone(),
        ensemble,
        standardizer: Some(standardizer),
        inner: Inner::Net(nets),
    })
}

impl<T: Scalar> SurrogateModel<T> {
    pub fn kind(&self) -> SurrogateKind {
        self.config.kind
    }

    pub fn input_dim(&self) -> usize {
        match &self.inner {
            Inner::Gp(m) => m.input_dim(),
            Inner::Net(nets) => nets[0].spec.input_dim,
        }
    }

    /// The underlying GP, when this is a `gp` surrogate.
    pub fn gp(&self) -> Option<&GpModel<T>> {
        match &self.inner {
            Inner::Gp(m) => Some(m),
            Inner::Net(_) => None,
        }
    }

    /// The underlying network member(s); empty for the GP.
    pub fn members(&self) -> &[crate::nn::NetworkState<T>] {
        match &self.inner {
            Inner::Gp(_) => &[],
            Inner::Net(nets) => nets,
        }
    }

    /// Mutable member access, e.g. for pinning variational noise.
    pub fn members_mut(&mut self) -> &mut [crate::nn::NetworkState<T>] {
        match &mut self.inner {
            Inner::Gp(_) => &mut [],
            Inner::Net(nets) => nets,
        }
    }
}

// ---------------------------------------------------------------------------
// Prediction.
// ---------------------------------------------------------------------------

/// Predicts at one query point.
///
/// `passes` overrides the ensemble size: the member-prefix length for
/// `enn`/`egnn`, the stochastic pass count for `dnn`/`dgnn`/`bnn`; it is
/// ignored by the single-shot variants. Stochastic passes draw from a
/// child stream of `seed`, so repeated calls reproduce bitwise.
pub fn predict<T: Scalar>(
    model: &SurrogateModel<T>,
    query: &[T],
    seed: u64,
    passes: Option<usize>,
) -> Result<Posterior<T>, UqError> {
    if query.len() != model.input_dim() {
        return Err(UqError::DimensionMismatch {
            expected: model.input_dim(),
            got: query.len(),
        });
    }
    let nets = match &model.inner {
        Inner::Gp(m) => return Ok(gp::predict(m, query)),
        Inner::Net(nets) => nets,
    };
    let standardizer = model
        .standardizer
        .as_ref()
        .expect("network surrogates carry a standardizer");
    let q = standardizer.transform_query(query);
    let mut rng = child_rng(seed, STREAM_UQ_PREDICT);
    let kind = model.config.kind;
    let outputs: Vec<crate::nn::NetOutput<T>> = match kind {
        SurrogateKind::Nn | SurrogateKind::Gnn => {
            vec![crate::nn::forward(
                &nets[0],
                &q,
                crate::nn::Mode::InferDeterministic,
                &mut rng,
            )]
        }
        SurrogateKind::Enn | SurrogateKind::Egnn => {
            let k = passes.unwrap_or(nets.len());
            if k < 2 {
                return Err(UqError::DegenerateEnsemble { n_e: k });
            }
            if k > nets.len() {
                return Err(UqError::InvalidRequest(format!(
                    "requested {k} members but only {} were trained",
                    nets.len()
                )));
            }
            nets[..k]
                .iter()
                .map(|n| crate::nn::forward(n, &q, crate::nn::Mode::InferDeterministic, &mut rng))
                .collect()
        }
        SurrogateKind::Dnn | SurrogateKind::Dgnn | SurrogateKind::Bnn => {
            let k = passes.unwrap_or(model.config.passes);
            if k < 2 {
                return Err(UqError::DegenerateEnsemble { n_e: k });
            }
            (0..k)
                .map(|_| {
                    crate::nn::forward(&nets[0], &q, crate::nn::Mode::InferStochastic, &mut rng)
                })
                .collect()
        }
        SurrogateKind::Gp => unreachable!("handled above"),
    };

    let p = if outputs.len() == 1 {
        Posterior {
            mu: outputs[0].mu,
            sigma_eps: T::zero(),
            sigma_n: if kind.has_aleatoric() {
                outputs[0].sigma_n.unwrap_or_else(T::zero)
            } else {
                T::zero()
            },
        }
    } else if kind.has_aleatoric() {
        let pairs: Vec<(T, T)> = outputs
            .iter()
            .map(|o| (o.mu, o.sigma_n.unwrap_or_else(T::zero)))
            .collect();
        ensemble_predict_gaussian(&pairs)?
    } else {
        let mus: Vec<T> = outputs.iter().map(|o| o.mu).collect();
        ensemble_predict_deterministic(&mus)?
    };
    Ok(Posterior {
        mu: standardizer.mu_to_output(p.mu),
        sigma_eps: standardizer.sigma_to_output(p.sigma_eps),
        sigma_n: standardizer.sigma_to_output(p.sigma_n),
    })
}

/// Predicts at every row of `queries`, in parallel. Row `i` uses the seed
/// `child_seed(seed, STREAM_UQ_QUERY + i)`, so results are independent of
/// both batching and thread scheduling.
pub fn predict_batch<T: Scalar>(
    model: &SurrogateModel<T>,
    queries: &Mat<T>,
    seed: u64,
    passes: Option<usize>,
) -> Result<Vec<Posterior<T>>, UqError> {
    if queries.cols() != model.input_dim() {
        return Err(UqError::DimensionMismatch {
            expected: model.input_dim(),
            got: queries.cols(),
        });
    }
    (0..queries.rows())
        .into_par_iter()
        .map(|i| {
            predict(
                model,
                queries.row(i),
                child_seed(seed, STREAM_UQ_QUERY + i as u64),
                passes,
            )
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Ensemble-size convergence.
// ---------------------------------------------------------------------------

/// One point of an ensemble-size convergence curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub n_e: usize,
    /// Integrated |log-density difference| between the σ_ε histogram at
    /// this size and at the reference size.
    pub log_pdf_diff: f64,
    /// Mean squared per-query σ_ε difference against the reference.
    pub mean_sq_diff: f64,
}

/// Measures how the σ_ε distribution over `queries` converges as the
/// ensemble size grows, against a reference size.
///
/// Member outputs at the reference size are drawn once per query and
/// *prefixes* of that draw stand in for smaller ensembles, so a grid
/// point equal to the reference yields exactly zero in both measures.
pub fn convergence_study<T: Scalar>(
    model: &SurrogateModel<T>,
    queries: &Mat<T>,
    grid: &[usize],
    reference: usize,
    seed: u64,
) -> Result<Vec<ConvergencePoint>, UqError> {
    let ensemble = model.ensemble.as_ref().ok_or_else(|| match model.kind() {
        SurrogateKind::Gp => {
            UqError::InvalidRequest("the GP posterior has no ensemble size to vary".into())
        }
        kind => UqError::NoEpistemicUQ { variant: kind },
    })?;
    if queries.rows() == 0 {
        return Err(UqError::InvalidRequest("empty query set".into()));
    }
    if queries.cols() != model.input_dim() {
        return Err(UqError::DimensionMismatch {
            expected: model.input_dim(),
            got: queries.cols(),
        });
    }
    if grid.is_empty() {
        return Err(UqError::InvalidRequest("empty ensemble-size grid".into()));
    }
    if reference < 2 {
        return Err(UqError::DegenerateEnsemble { n_e: reference });
    }
    for &g in grid {
        if g < 2 {
            return Err(UqError::DegenerateEnsemble { n_e: g });
        }
        if g > reference {
            return Err(UqError::InvalidRequest(format!(
                "grid point {g} exceeds the reference size {reference}"
            )));
        }
    }
    if ensemble.kind == EnsembleKind::IndependentNets && reference > ensemble.n_e {
        return Err(UqError::InvalidRequest(format!(
            "reference size {reference} exceeds the {} trained members",
            ensemble.n_e
        )));
    }

    let nets = model.members();
    let standardizer = model
        .standardizer
        .as_ref()
        .expect("ensemble surrogates carry a standardizer");

    // Per query: `reference` member means, in draw order.
    let mus: Vec<Vec<T>> = (0..queries.rows())
        .into_par_iter()
        .map(|i| {
            let q = standardizer.transform_query(queries.row(i));
            let mut rng = child_rng(
                child_seed(seed, STREAM_UQ_QUERY + i as u64),
                STREAM_UQ_PREDICT,
            );
            (0..reference)
                .map(|j| match ensemble.kind {
                    EnsembleKind::IndependentNets => {
                        crate::nn::forward(
                            &nets[j],
                            &q,
                            crate::nn::Mode::InferDeterministic,
                            &mut rng,
                        )
                        .mu
                    }
                    _ => {
                        crate::nn::forward(
                            &nets[0],
                            &q,
                            crate::nn::Mode::InferStochastic,
                            &mut rng,
                        )
                        .mu
                    }
                })
                .collect()
        })
        .collect();

    let sigma_at = |k: usize| -> Vec<T> {
        mus.iter()
            .map(|m| standardizer.sigma_to_output(spread_of_means(&m[..k])))
            .collect()
    };
    let reference_sigma = sigma_at(reference);
    Ok(grid
        .iter()
        .map(|&g| {
            let sigma = sigma_at(g);
            let mean_sq_diff = sigma
                .iter()
                .zip(&reference_sigma)
                .map(|(&a, &b)| {
                    let d = (a - b).as_f64();
                    d * d
                })
                .sum::<f64>()
                / sigma.len() as f64;
            let log_pdf_diff = crate::metrics::log_pdf_difference(&sigma, &reference_sigma);
            ConvergencePoint {
                n_e: g,
                log_pdf_diff,
                mean_sq_diff,
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Snapshots.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotMeta {
    kind: String,
    variant: SurrogateKind,
    config: SurrogateConfig,
    ensemble: Option<EnsembleConfig>,
    input_dim: usize,
    members: usize,
}

impl<T: Scalar> SurrogateModel<T> {
    /// Persists the model in the container format, tagged with its variant.
    /// Raw parameter values are stored, so reloaded models predict bitwise
    /// identically.
    pub fn save(&self, path: &std::path::Path) -> Result<(), UqError> {
        let meta = SnapshotMeta {
            kind: "surrogate-model".into(),
            variant: self.config.kind,
            config: self.config.clone(),
            ensemble: self.ensemble.clone(),
            input_dim: self.input_dim(),
            members: self.members().len(),
        };
        let meta = serde_json::to_value(meta).expect("snapshot meta serializes");
        let mut sections = Vec::new();
        match &self.inner {
            Inner::Gp(m) => {
                let d = m.input_dim();
                let n = m.posterior.outputs.len();
                let mut raw: Vec<f64> = Vec::with_capacity(d + 2);
                raw.push(m.hyperparams.theta_sigma.as_f64());
                raw.extend(m.hyperparams.theta.iter().map(|v| v.as_f64()));
                raw.push(m.hyperparams.sigma_n.as_f64());
                sections.push(Section::new("gp_hyperparams", 1, d + 2, raw));
                sections.push(Section::new(
                    "gp_inputs",
                    n,
                    d,
                    m.posterior.inputs.as_slice().iter().map(|v| v.as_f64()).collect(),
                ));
                sections.push(Section::new(
                    "gp_outputs",
                    n,
                    1,
                    m.posterior.outputs.iter().map(|v| v.as_f64()).collect(),
                ));
            }
            Inner::Net(nets) => {
                for (j, net) in nets.iter().enumerate() {
                    sections.push(Section::new(
                        &format!("member_{j}"),
                        1,
                        net.params().len(),
                        net.params().iter().map(|v| v.as_f64()).collect(),
                    ));
                }
            }
        }
        if let Some(s) = &self.standardizer {
            let d = s.x_mean.len();
            sections.push(Section::new(
                "x_mean",
                1,
                d,
                s.x_mean.iter().map(|v| v.as_f64()).collect(),
            ));
            sections.push(Section::new(
                "x_std",
                1,
                d,
                s.x_std.iter().map(|v| v.as_f64()).collect(),
            ));
            sections.push(Section::new(
                "y_stats",
                1,
                2,
                vec![s.y_mean.as_f64(), s.y_std.as_f64()],
            ));
        }
        container::write(path, meta, &sections)?;
        Ok(())
    }

    /// Loads a snapshot written by [`save`](Self::save).
    pub fn load(path: &std::path::Path) -> Result<Self, UqError> {
        let (meta_value, sections) = container::read(path)?;
        let meta: SnapshotMeta = serde_json::from_value(meta_value).map_err(|e| {
            UqError::InvalidRequest(format!("snapshot metadata does not parse: {e}"))
        })?;
        if meta.kind != "surrogate-model" {
            return Err(UqError::InvalidRequest(format!(
                "expected a surrogate-model snapshot, found kind {:?}",
                meta.kind
            )));
        }
        let find = |name: &str| {
            sections
                .iter()
                .find(|s| s.name == name)
                .ok_or_else(|| UqError::InvalidRequest(format!("snapshot lacks section {name}")))
        };
        let standardizer = if sections.iter().any(|s| s.name == "x_mean") {
            let xm = find("x_mean")?;
            let xs = find("x_std")?;
            let ys = find("y_stats")?;
            Some(Standardizer {
                x_mean: xm.data.iter().map(|&v| T::of_f64(v)).collect(),
                x_std: xs.data.iter().map(|&v| T::of_f64(v)).collect(),
                y_mean: T::of_f64(ys.data[0]),
                y_std: T::of_f64(ys.data[1]),
            })
        } else {
            None
        };
        let inner = if meta.variant == SurrogateKind::Gp {
            let raw = find("gp_hyperparams")?;
            let inputs = find("gp_inputs")?;
            let outputs = find("gp_outputs")?;
            if raw.cols != meta.input_dim + 2 || inputs.cols != meta.input_dim {
                return Err(UqError::InvalidRequest(
                    "snapshot sections disagree with the recorded dimension".into(),
                ));
            }
            let hp = gp::GpHyperparams {
                theta_sigma: T::of_f64(raw.data[0]),
                theta: raw.data[1..=meta.input_dim]
                    .iter()
                    .map(|&v| T::of_f64(v))
                    .collect(),
                sigma_n: T::of_f64(raw.data[meta.input_dim + 1]),
            };
            let a = Mat::from_flat(
                inputs.rows,
                inputs.cols,
                inputs.data.iter().map(|&v| T::of_f64(v)).collect(),
            );
            let y: Vec<T> = outputs.data.iter().map(|&v| T::of_f64(v)).collect();
            Inner::Gp(GpModel::from_hyperparams(hp, a, y)?)
        } else {
            let spec = net_spec_for(&meta.config, meta.input_dim);
            let nets: Vec<crate::nn::NetworkState<T>> = (0..meta.members)
                .map(|j| {
                    let section = find(&format!("member_{j}"))?;
                    let params: Vec<T> = section.data.iter().map(|&v| T::of_f64(v)).collect();
                    crate::nn::NetworkState::from_params(&spec, params).map_err(UqError::from)
                })
                .collect::<Result<_, _>>()?;
            if nets.is_empty() {
                return Err(UqError::InvalidRequest(
                    "snapshot holds no network members".into(),
                ));
            }
            Inner::Net(nets)
        };
        Ok(SurrogateModel {
            config: meta.config,
            ensemble: meta.ensemble,
            standardizer,
            inner,
        })
    }
}
