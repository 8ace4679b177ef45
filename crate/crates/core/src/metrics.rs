//! Calibration and uncertainty-distribution measures.
//!
//! Two views drive every comparison in this crate:
//!
//! * **Normalized residuals** `z_i = (y_i − μ(α_i)) / σ(α_i)` with `σ` the
//!   *total* predictive standard deviation `√(σ_ε² + σ_n²)`; a calibrated
//!   model produces `z` with mean 0 and variance 1.
//! * **Epistemic-uncertainty distributions**: the histogram of `σ_ε` over a
//!   validation set, showing how accurate a scheme believes it is.
//!
//! Binning policy (shared by both): Freedman–Diaconis bin width clipped to
//! [20, 200] bins, over a support shared by every overlaid sample set so
//! that integrated log-density differences are well defined. Densities are
//! floored at `1/(10·n·binwidth)` before logs are taken, which keeps empty
//! bins finite.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::uq::{Posterior, SurrogateKind};

/// Bin-count clip range for the Freedman–Diaconis rule.
pub const MIN_BINS: usize = 20;
pub const MAX_BINS: usize = 200;

#[derive(Debug, Error)]
pub enum MetricsError {
    /// A query reported zero total uncertainty; normalized residuals would
    /// divide by zero. Signals a variant with no UQ being scored.
    #[error("zero total uncertainty at query {index}")]
    ZeroUncertainty { index: usize },

    /// The variant does not provide epistemic uncertainty.
    #[error("variant {variant} provides no epistemic uncertainty")]
    NoEpistemicUQ { variant: SurrogateKind },

    /// Malformed request (empty validation set, mismatched lengths, ...).
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// A binned sample set over `[edges[0], edges[bins]]` with uniform bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram<T> {
    /// `bins + 1` strictly increasing edges.
    pub edges: Vec<T>,
    /// Per-bin sample counts; sums to the sample count.
    pub counts: Vec<usize>,
    /// Per-bin probability densities `count / (n · binwidth)`.
    pub densities: Vec<T>,
}

impl<T: Scalar> Histogram<T> {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> T {
        self.edges[1] - self.edges[0]
    }

    pub fn centers(&self) -> Vec<T> {
        let half = T::of_f64(0.5);
        self.edges
            .windows(2)
            .map(|w| (w[0] + w[1]) * half)
            .collect()
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().sum()
    }

    /// CSV rows `bin_left,bin_right,count,density` (with header).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count,density\n");
        for i in 0..self.bins() {
            out.push_str(&format!(
                "{:e},{:e},{},{:e}\n",
                self.edges[i],
                self.edges[i + 1],
                self.counts[i],
                self.densities[i]
            ));
        }
        out
    }
}

/// Normalized-residual summary for one model over a validation set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NrReport<T> {
    pub z_values: Vec<T>,
    pub mean: T,
    /// Population variance of `z_values`.
    pub variance: T,
    pub histogram: Histogram<T>,
    /// Standard-normal density at the histogram's bin centers.
    pub reference: Vec<T>,
}

/// Epistemic-uncertainty summary for one model over a validation set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintyReport<T> {
    pub sigma_eps_values: Vec<T>,
    pub histogram: Histogram<T>,
    /// Mean aleatoric level, present when the model reports one.
    pub sigma_n: Option<T>,
}

/// One model's entry in a comparison bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelReport<T> {
    pub name: String,
    pub kind: SurrogateKind,
    pub nr: NrReport<T>,
    /// Absent for variants without epistemic UQ.
    pub uncertainty: Option<UncertaintyReport<T>>,
}

/// Overlay-ready reports for several models scored on one validation set.
/// All NR histograms share one set of edges; all σ_ε histograms share
/// another, so the tables can be compared bin by bin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonBundle<T> {
    pub models: Vec<ModelReport<T>>,
}

// ---------------------------------------------------------------------------
// Binning.
// ---------------------------------------------------------------------------

/// Linear-interpolation quantile of a sorted slice, `q ∈ [0, 1]`.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Freedman–Diaconis bin count over `[lo, hi]`, clipped to `[20, 200]`.
/// `values` need not be sorted; they are only used for the IQR.
pub fn fd_bin_count<T: Scalar>(values: &[T], lo: f64, hi: f64) -> usize {
    let mut sorted: Vec<f64> = values.iter().map(|v| v.as_f64()).collect();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let width = 2.0 * iqr * (sorted.len() as f64).powf(-1.0 / 3.0);
    let range = hi - lo;
    if width <= 0.0 || range <= 0.0 {
        return MIN_BINS;
    }
    ((range / width).ceil() as usize).clamp(MIN_BINS, MAX_BINS)
}

/// Bins `values` into `bins` uniform bins over `[lo, hi]`. Values outside
/// the support are clamped into the boundary bins, so mass is conserved
/// exactly.
pub fn histogram<T: Scalar>(values: &[T], lo: T, hi: T, bins: usize) -> Histogram<T> {
    assert!(bins >= 1, "need at least one bin");
    assert!(hi > lo, "support must have positive width");
    let n = values.len();
    let width = (hi - lo) / T::of_f64(bins as f64);
    let mut counts = vec![0usize; bins];
    for v in values {
        let idx = ((*v - lo) / width).as_f64().floor();
        let idx = (idx.max(0.0) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let norm = T::of_f64(n as f64) * width;
    let densities = counts
        .iter()
        .map(|&c| T::of_f64(c as f64) / norm)
        .collect();
    let edges = (0..=bins)
        .map(|i| lo + T::of_f64(i as f64) * width)
        .collect();
    Histogram {
        edges,
        counts,
        densities,
    }
}

/// Support shared by several sample sets: `[min, max]` over all of them,
/// padded to positive width when every value coincides.
fn shared_support<T: Scalar>(sets: &[&[T]]) -> (T, T) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for set in sets {
        for v in set.iter() {
            lo = lo.min(v.as_f64());
            hi = hi.max(v.as_f64());
        }
    }
    if !(hi > lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    (T::of_f64(lo), T::of_f64(hi))
}

/// Integrated absolute log-density difference between the histograms of two
/// sample sets over their shared support:
/// `Σ_bins |log p̂_a − log p̂_b| · binwidth`, densities floored at
/// `1/(10·n·binwidth)`. The binning is Freedman–Diaconis on the pooled
/// samples so both histograms share edges.
pub fn log_pdf_difference<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "empty sample set");
    let (lo, hi) = shared_support(&[a, b]);
    let mut pooled: Vec<T> = Vec::with_capacity(a.len() + b.len());
    pooled.extend_from_slice(a);
    pooled.extend_from_slice(b);
    let bins = fd_bin_count(&pooled, lo.as_f64(), hi.as_f64());
    let ha = histogram(a, lo, hi, bins);
    let hb = histogram(b, lo, hi, bins);
    let w = ha.bin_width().as_f64();
    let floor_a = 1.0 / (10.0 * a.len() as f64 * w);
    let floor_b = 1.0 / (10.0 * b.len() as f64 * w);
    let mut total = 0.0;
    for i in 0..bins {
        let pa = ha.densities[i].as_f64().max(floor_a);
        let pb = hb.densities[i].as_f64().max(floor_b);
        total += (pa.ln() - pb.ln()).abs() * w;
    }
    total
}

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

fn mean_and_population_variance<T: Scalar>(values: &[T]) -> (T, T) {
    let n = T::of_f64(values.len() as f64);
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<T>()
        / n;
    (mean, var)
}

fn standard_normal_density<T: Scalar>(x: T) -> T {
    let half = T::of_f64(0.5);
    (-half * x * x).exp() / T::of_f64(std::f64::consts::TAU).sqrt()
}

/// Computes z-values against targets; errors if any query reports zero
/// total uncertainty.
fn z_values<T: Scalar>(posteriors: &[Posterior<T>], targets: &[T]) -> Result<Vec<T>, MetricsError> {
    if posteriors.is_empty() {
        return Err(MetricsError::InvalidRequest("empty validation set".into()));
    }
    if posteriors.len() != targets.len() {
        return Err(MetricsError::InvalidRequest(format!(
            "{} predictions vs {} targets",
            posteriors.len(),
            targets.len()
        )));
    }
    posteriors
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (p, &y))| {
            let var = p.total_variance();
            if var <= T::zero() {
                return Err(MetricsError::ZeroUncertainty { index: i });
            }
            Ok((y - p.mu) / var.sqrt())
        })
        .collect()
}

/// Builds an [`NrReport`] from z-values over the given support (shared
/// across models when called from [`report`]).
fn nr_report_on_support<T: Scalar>(z: Vec<T>, lo: T, hi: T, bins: usize) -> NrReport<T> {
    let (mean, variance) = mean_and_population_variance(&z);
    let histogram = histogram(&z, lo, hi, bins);
    let reference = histogram
        .centers()
        .iter()
        .map(|&c| standard_normal_density(c))
        .collect();
    NrReport {
        z_values: z,
        mean,
        variance,
        histogram,
        reference,
    }
}

/// Normalized residuals of one model's predictions against targets, with
/// `σ` the total predictive standard deviation.
pub fn normalized_residuals<T: Scalar>(
    posteriors: &[Posterior<T>],
    targets: &[T],
) -> Result<NrReport<T>, MetricsError> {
    let z = z_values(posteriors, targets)?;
    let (lo, hi) = shared_support(&[&z]);
    let bins = fd_bin_count(&z, lo.as_f64(), hi.as_f64());
    Ok(nr_report_on_support(z, lo, hi, bins))
}

fn uncertainty_report_on_support<T: Scalar>(
    posteriors: &[Posterior<T>],
    lo: T,
    hi: T,
    bins: usize,
) -> UncertaintyReport<T> {
    let sigma_eps_values: Vec<T> = posteriors.iter().map(|p| p.sigma_eps).collect();
    let histogram = histogram(&sigma_eps_values, lo, hi, bins);
    let n = T::of_f64(posteriors.len() as f64);
    let mean_sigma_n = posteriors.iter().map(|p| p.sigma_n).sum::<T>() / n;
    let sigma_n = if posteriors.iter().all(|p| p.sigma_n == T::zero()) {
        None
    } else {
        Some(mean_sigma_n)
    };
    UncertaintyReport {
        sigma_eps_values,
        histogram,
        sigma_n,
    }
}

/// Distribution of epistemic uncertainties over a validation set.
///
/// `kind` gates the capability: variants advertising no epistemic UQ are
/// refused rather than histogrammed as a spike at zero.
pub fn uncertainty_distribution<T: Scalar>(
    kind: SurrogateKind,
    posteriors: &[Posterior<T>],
) -> Result<UncertaintyReport<T>, MetricsError> {
    if !kind.has_epistemic() {
        return Err(MetricsError::NoEpistemicUQ { variant: kind });
    }
    if posteriors.is_empty() {
        return Err(MetricsError::InvalidRequest("empty validation set".into()));
    }
    let sigma: Vec<T> = posteriors.iter().map(|p| p.sigma_eps).collect();
    let (lo, hi) = shared_support(&[&sigma]);
    let bins = fd_bin_count(&sigma, lo.as_f64(), hi.as_f64());
    Ok(uncertainty_report_on_support(posteriors, lo, hi, bins))
}

/// Uncertainty-sampling acquisition `u(α) = w(α)·σ_ε²(α)`.
pub fn acquisition<T: Scalar, F: Fn(&[T]) -> T>(
    kind: SurrogateKind,
    posterior: &Posterior<T>,
    query: &[T],
    weight_fn: F,
) -> Result<T, MetricsError> {
    if !kind.has_epistemic() {
        return Err(MetricsError::NoEpistemicUQ { variant: kind });
    }
    Ok(weight_fn(query) * posterior.sigma_eps * posterior.sigma_eps)
}

/// Builds the comparison bundle for several models scored on one validation
/// set: per-model NR and σ_ε reports on bins shared across models, with the
/// standard-normal reference sampled at the shared bin centers.
///
/// `bins` overrides the Freedman–Diaconis bin count for both overlays.
pub fn report<T: Scalar>(
    entries: &[(String, SurrogateKind, Vec<Posterior<T>>)],
    targets: &[T],
    bins: Option<usize>,
) -> Result<ComparisonBundle<T>, MetricsError> {
    if entries.is_empty() {
        return Err(MetricsError::InvalidRequest("no models to report".into()));
    }
    if bins == Some(0) {
        return Err(MetricsError::InvalidRequest(
            "bin override must be at least 1".into(),
        ));
    }
    // Shared NR support and bins from the pooled z-values.
    let mut all_z: Vec<Vec<T>> = Vec::with_capacity(entries.len());
    for (_, _, posteriors) in entries {
        all_z.push(z_values(posteriors, targets)?);
    }
    let z_slices: Vec<&[T]> = all_z.iter().map(|v| v.as_slice()).collect();
    let (z_lo, z_hi) = shared_support(&z_slices);
    let pooled_z: Vec<T> = all_z.iter().flatten().copied().collect();
    let z_bins =
        bins.unwrap_or_else(|| fd_bin_count(&pooled_z, z_lo.as_f64(), z_hi.as_f64()));

    // Shared σ_ε support over the models that provide it.
    let epistemic: Vec<&(String, SurrogateKind, Vec<Posterior<T>>)> = entries
        .iter()
        .filter(|(_, kind, _)| kind.has_epistemic())
        .collect();
    let sigma_sets: Vec<Vec<T>> = epistemic
        .iter()
        .map(|(_, _, p)| p.iter().map(|q| q.sigma_eps).collect())
        .collect();
    let sigma_shared = if sigma_sets.is_empty() {
        None
    } else {
        let slices: Vec<&[T]> = sigma_sets.iter().map(|v| v.as_slice()).collect();
        let (lo, hi) = shared_support(&slices);
        let pooled: Vec<T> = sigma_sets.iter().flatten().copied().collect();
        let n_bins =
            bins.unwrap_or_else(|| fd_bin_count(&pooled, lo.as_f64(), hi.as_f64()));
        Some((lo, hi, n_bins))
    };

    let mut models = Vec::with_capacity(entries.len());
    for ((name, kind, posteriors), z) in entries.iter().zip(all_z) {
        let nr = nr_report_on_support(z, z_lo, z_hi, z_bins);
        let uncertainty = match (kind.has_epistemic(), sigma_shared) {
            (true, Some((lo, hi, bins))) => {
                Some(uncertainty_report_on_support(posteriors, lo, hi, bins))
            }
            _ => None,
        };
        models.push(ModelReport {
            name: name.clone(),
            kind: *kind,
            nr,
            uncertainty,
        });
    }
    Ok(ComparisonBundle { models })
}
