//! Experiment configuration: one TOML file drives a full `run`.
//!
//! The schema is versioned so stored configs stay interpretable. Every
//! field beyond the experiment shape (dimensions, sizes, model list) is
//! optional and falls back to the library defaults, which carry the
//! reference physics parameters (λ = −4, α_m = 1/2, grid 512, T = 50,
//! z* = 6, σ_u² = 1, ℓ_u = 0.35, ensemble sizes 8/50/100, r_D = 0.5).

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use uqbench_core::datasets::GenerationMeta;
use uqbench_core::uq::{SurrogateConfig, SurrogateKind};

/// Config revisions this binary understands.
pub const SCHEMA_VERSION: u32 = 1;

/// Top-level experiment description, deserialized from TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Root seed; dataset, split, training, and prediction streams all
    /// derive from it unless overridden per section.
    pub seed: u64,
    pub dataset: DatasetSection,
    /// Defaults to empty so a missing section reports "nothing to train"
    /// rather than a bare deserialization error.
    #[serde(default)]
    pub models: Vec<ModelSection>,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Dataset generation and split parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Retained KL modes; the coefficient input space is `2m`-dimensional.
    pub m: usize,
    /// LHS batch size before quarantine.
    pub n: usize,
    /// Hyperbox half-width in standardized coefficient units.
    pub z_star: f64,
    /// Rows routed to training; the rest form the validation set.
    pub train_size: usize,
    /// Generation seed (default: the root seed).
    #[serde(default)]
    pub seed: Option<u64>,
    /// Split-shuffle seed (default: the root seed).
    #[serde(default)]
    pub split_seed: Option<u64>,
    /// Solver grid override.
    #[serde(default)]
    pub grid_size: Option<usize>,
    /// Integration horizon override.
    #[serde(default)]
    pub t_end: Option<f64>,
    /// Time-step override.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Covariance scale override.
    #[serde(default)]
    pub sigma_u_sq: Option<f64>,
    /// Correlation-length override.
    #[serde(default)]
    pub ell_u: Option<f64>,
    /// Store 1024-wide initial-condition traces (needed by functional
    /// models; on by default).
    #[serde(default = "default_true")]
    pub store_traces: bool,
}

fn default_true() -> bool {
    true
}

impl DatasetSection {
    /// Builds the generation request, applying any solver overrides.
    pub fn generation_meta(&self, root_seed: u64) -> GenerationMeta<f64> {
        let mut meta = GenerationMeta::new(self.seed.unwrap_or(root_seed), self.z_star, self.m);
        if let Some(g) = self.grid_size {
            meta.mmt.grid_size = g;
        }
        if let Some(t) = self.t_end {
            meta.mmt.t_end = t;
        }
        if let Some(dt) = self.dt {
            meta.mmt.dt = dt;
        }
        if let Some(s) = self.sigma_u_sq {
            meta.kernel.sigma_u_sq = s;
        }
        if let Some(l) = self.ell_u {
            meta.kernel.ell_u = l;
        }
        meta.store_traces = self.store_traces;
        meta
    }
}

/// One surrogate entry in the comparison. Optional fields override the
/// variant defaults from [`SurrogateConfig::for_kind`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Variant token: gp | nn | gnn | enn | egnn | bnn | dnn | dgnn.
    pub kind: String,
    /// Report/file name (default: the variant token).
    #[serde(default)]
    pub name: Option<String>,
    /// Hidden-layer widths.
    #[serde(default)]
    pub hidden: Option<Vec<usize>>,
    /// Ensemble size: trained members for enn/egnn, stochastic forward
    /// passes for dnn/dgnn/bnn.
    #[serde(default)]
    pub n_e: Option<usize>,
    /// Dropout rate for the MC-dropout variants.
    #[serde(default)]
    pub dropout_rate: Option<f64>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub l2_weight: Option<f64>,
    #[serde(default)]
    pub kl_weight: Option<f64>,
    /// GP optimizer restarts.
    #[serde(default)]
    pub restarts: Option<usize>,
    /// GP optimizer iterations per restart.
    #[serde(default)]
    pub iterations: Option<usize>,
    /// Train on the 1024-wide initial-condition traces instead of the
    /// KL coefficients.
    #[serde(default)]
    pub functional: bool,
}

impl ModelSection {
    pub fn kind(&self) -> Result<SurrogateKind> {
        self.kind.parse().map_err(anyhow::Error::msg)
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.clone())
    }

    /// Materializes the surrogate configuration with the given training
    /// seed, applying the section's overrides to the variant defaults.
    pub fn surrogate_config(&self, seed: u64) -> Result<SurrogateConfig> {
        let kind = self.kind()?;
        let mut cfg = SurrogateConfig::for_kind(kind).with_seed(seed);
        if let Some(h) = &self.hidden {
            cfg.hidden = h.clone();
        }
        if let Some(k) = self.n_e {
            apply_ensemble_size(&mut cfg, k)?;
        }
        if let Some(r) = self.dropout_rate {
            if !matches!(kind, SurrogateKind::Dnn | SurrogateKind::Dgnn) {
                bail!("dropout_rate applies to dnn/dgnn only, not {kind}");
            }
            cfg.dropout_rate = r;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(lr) = self.learning_rate {
            cfg.train.learning_rate = lr;
            cfg.gp.learning_rate = lr;
        }
        if let Some(l2) = self.l2_weight {
            cfg.train.l2_weight = l2;
        }
        if let Some(kl) = self.kl_weight {
            cfg.train.kl_weight = kl;
        }
        if let Some(r) = self.restarts {
            cfg.gp.restarts = r;
        }
        if let Some(i) = self.iterations {
            cfg.gp.iterations = i;
        }
        cfg.standardize_inputs = self.functional;
        Ok(cfg)
    }
}

/// Routes a single "ensemble size" knob to the field the variant actually
/// reads: member count for trained ensembles, pass count for the
/// sampling-based ones.
pub fn apply_ensemble_size(cfg: &mut SurrogateConfig, n_e: usize) -> Result<()> {
    match cfg.kind {
        SurrogateKind::Enn | SurrogateKind::Egnn => cfg.n_e = n_e,
        SurrogateKind::Dnn | SurrogateKind::Dgnn | SurrogateKind::Bnn => cfg.passes = n_e,
        kind => bail!("{kind} is not an ensemble variant; n_e does not apply"),
    }
    Ok(())
}

/// Report options.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// Fixed histogram bin count (default: Freedman–Diaconis).
    pub bins: Option<usize>,
}

/// Artifact placement.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Output directory; relative paths resolve against the output root.
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates a config from its TOML text. Callers keep the
    /// raw text: its digest goes into the run manifest.
    pub fn from_toml(raw: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(raw).context("parsing TOML")?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "schema_version {} unsupported (this binary reads {})",
                self.schema_version,
                SCHEMA_VERSION
            );
        }
        if self.models.is_empty() {
            bail!("models list is empty; nothing to train");
        }
        let ds = &self.dataset;
        if ds.m == 0 || ds.n == 0 {
            bail!("dataset m and n must be positive");
        }
        if !(ds.z_star > 0.0) {
            bail!("z_star must be positive");
        }
        if ds.train_size == 0 || ds.train_size + 1 > ds.n {
            bail!(
                "train_size {} incompatible with n = {} (need 1 ≤ train_size ≤ n − 1)",
                ds.train_size,
                ds.n
            );
        }
        if self.metrics.bins == Some(0) {
            bail!("metrics.bins must be at least 1");
        }
        let mut names = std::collections::BTreeSet::new();
        for m in &self.models {
            let kind = m.kind()?;
            let name = m.name();
            validate_name(&name)?;
            if !names.insert(name.clone()) {
                bail!("duplicate model name `{name}`");
            }
            if m.functional {
                if !ds.store_traces {
                    bail!("model `{name}` is functional but store_traces is off");
                }
                if kind == SurrogateKind::Gp {
                    bail!("functional inputs are a network feature; `{name}` is a GP");
                }
            }
            // Materialize once so mistargeted overrides fail at load time.
            m.surrogate_config(0)?;
        }
        Ok(())
    }
}

/// Model names become file stems; keep them shell- and filesystem-safe.
pub fn validate_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_');
    if !ok {
        bail!("model name `{name}` (use lowercase letters, digits, `-`, `_`)");
    }
    Ok(())
}
