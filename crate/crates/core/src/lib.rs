//! Cross-comparison benchmark for uncertainty quantification in surrogate
//! models of an extreme-event-prone dispersive wave system.
//!
//! The crate covers the full experiment pipeline:
//!
//! * [`kl`] — Karhunen-Loève decomposition of a periodic complex kernel and
//!   Latin-hypercube sampling of its coefficient space, giving reproducible
//!   random initial conditions.
//! * [`mmt`] — a pseudospectral ETDRK4 solver for the
//!   Majda-McLaughlin-Tabak (MMT) model, mapping each initial condition to a
//!   scalar extreme-event observable.
//! * [`datasets`] — generation, splitting, and a checksummed on-disk
//!   container for input/output datasets.
//! * [`gp`] — exact Gaussian-process regression with marginal-likelihood
//!   hyperparameter fitting.
//! * [`nn`] — a small dense-network engine with deterministic, Gaussian, and
//!   variational heads, dropout, and Adam training.
//! * [`uq`] — the surrogate zoo built from those two engines (ensembles,
//!   MC-dropout, variational nets) behind one train/predict interface, plus
//!   ensemble-size convergence studies.
//! * [`metrics`] — calibration diagnostics: normalized residuals,
//!   uncertainty histograms, and acquisition-function values.
//!
//! Everything numerical is generic over the [`Scalar`] precision; the
//! `*64` aliases at the crate root pin the `f64` instantiations the
//! experiment driver uses.

pub mod container;
pub mod datasets;
pub mod fft;
pub mod gp;
pub mod kl;
pub mod mat;
pub mod metrics;
pub mod mmt;
pub mod nn;
pub mod opt;
pub mod rng;
pub mod scalar;
pub mod uq;

pub use scalar::Scalar;

/// `f64` KL basis.
pub type KlBasis64 = kl::KlBasis<f64>;
/// `f64` kernel specification.
pub type KernelSpec64 = kl::KernelSpec<f64>;
/// `f64` MMT solver parameters.
pub type MmtParams64 = mmt::MmtParams<f64>;
/// `f64` dataset.
pub type Dataset64 = datasets::Dataset<f64>;
/// `f64` generation metadata.
pub type GenerationMeta64 = datasets::GenerationMeta<f64>;
/// `f64` GP regressor.
pub type GpModel64 = gp::GpModel<f64>;
/// `f64` network state.
pub type Network64 = nn::NetworkState<f64>;
/// `f64` surrogate model.
pub type Surrogate64 = uq::SurrogateModel<f64>;
/// `f64` posterior prediction.
pub type Posterior64 = uq::Posterior<f64>;
