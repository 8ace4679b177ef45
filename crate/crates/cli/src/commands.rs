//! The six subcommands. Each is a thin orchestration layer over the
//! library: argument structs double as documentation, and every artifact
//! write funnels through [`crate::artifacts`] so the output-root and
//! manifest rules hold everywhere.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Serialize;
use uqbench_core::datasets::{self, Dataset};
use uqbench_core::mat::Mat;
use uqbench_core::metrics::{self, ComparisonBundle};
use uqbench_core::rng::child_seed;
use uqbench_core::uq::{self, Posterior, SurrogateKind};
use uqbench_core::{container, Surrogate64};

use crate::artifacts::{ensure_parent, resolve_out, sha256_bytes, Manifest};
use crate::config::{validate_name, ExperimentConfig, ModelSection};

/// Seed streams for the stages of a `run`, kept distinct so one root seed
/// drives the whole experiment without correlated randomness.
const STREAM_CLI_MODEL: u64 = 0x434c_494d; // "CLIM" + model index
const STREAM_CLI_PREDICT: u64 = 0x434c_4950; // "CLIP" + model index

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// Sample a dataset: LHS designs in the KL coefficient box, solved through
/// the dispersive-wave model.
#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Retained KL modes (the coefficient space is 2m-dimensional).
    #[arg(long, required_unless_present = "dim", conflicts_with = "dim")]
    pub m: Option<usize>,
    /// Coefficient-space dimension 2m (even; alternative to --m).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Samples to draw (rows before quarantine).
    #[arg(long)]
    pub n: usize,
    /// Hyperbox half-width in standardized coefficient units.
    #[arg(long = "z-star", default_value_t = 6.0)]
    pub z_star: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset file.
    #[arg(long)]
    pub out: PathBuf,
    /// Solver grid-size override.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Integration-horizon override.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Time-step override.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Skip storing the 1024-wide initial-condition traces.
    #[arg(long = "no-traces")]
    pub no_traces: bool,
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let m = match (args.m, args.dim) {
        (Some(m), _) => m,
        (None, Some(dim)) if dim % 2 == 0 && dim > 0 => dim / 2,
        (None, Some(dim)) => bail!("--dim {dim} is not an even positive dimension"),
        (None, None) => unreachable!("clap requires --m or --dim"),
    };
    let mut meta = datasets::GenerationMeta::new(args.seed, args.z_star, m);
    if let Some(g) = args.grid {
        meta.mmt.grid_size = g;
    }
    if let Some(t) = args.t_end {
        meta.mmt.t_end = t;
    }
    if let Some(dt) = args.dt {
        meta.mmt.dt = dt;
    }
    meta.store_traces = !args.no_traces;

    let ds = datasets::generate(&meta, args.n)?;
    let out = resolve_out(&args.out);
    ensure_parent(&out)?;
    datasets::save(&ds, &out)?;
    println!(
        "wrote {} ({} rows, input dim {}, {} quarantined)",
        out.display(),
        ds.len(),
        ds.input_dim(),
        ds.quarantine.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Train one surrogate on a dataset (optionally on its training split).
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Variant: gp | nn | gnn | enn | egnn | bnn | dnn | dgnn.
    #[arg(long)]
    pub model: String,
    /// Input dataset file.
    #[arg(long)]
    pub data: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Train on a seeded split of this many rows (default: all rows).
    #[arg(long = "train-size")]
    pub train_size: Option<usize>,
    /// Split-shuffle seed (must match between train and evaluate).
    #[arg(long = "split-seed", default_value_t = 0)]
    pub split_seed: u64,
    /// Training seed (initialization, shuffles, masks).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train on the 1024-wide initial-condition traces.
    #[arg(long)]
    pub functional: bool,
    /// Hidden-layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Ensemble size: trained members (enn/egnn) or stochastic passes
    /// (dnn/dgnn/bnn).
    #[arg(long)]
    pub ne: Option<usize>,
    /// Dropout rate r_D (dnn/dgnn).
    #[arg(long)]
    pub rd: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long = "learning-rate")]
    pub learning_rate: Option<f64>,
    /// L2 weight penalty.
    #[arg(long)]
    pub l2: Option<f64>,
    /// KL term weight for the variational variant.
    #[arg(long = "kl-weight")]
    pub kl_weight: Option<f64>,
    /// GP optimizer restarts.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// GP optimizer iterations per restart.
    #[arg(long)]
    pub iterations: Option<usize>,
}

impl TrainArgs {
    /// Collects the overrides into a config-file model section so CLI and
    /// config runs materialize configurations through one code path.
    fn model_section(&self) -> ModelSection {
        ModelSection {
            kind: self.model.clone(),
            name: None,
            hidden: self.hidden.clone(),
            n_e: self.ne,
            dropout_rate: self.rd,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            l2_weight: self.l2,
            kl_weight: self.kl_weight,
            restarts: self.restarts,
            iterations: self.iterations,
            functional: self.functional,
        }
    }
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = args.model_section().surrogate_config(args.seed)?;
    let ds = datasets::load::<f64>(&args.data)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let train_ds = match args.train_size {
        Some(k) => datasets::split(&ds, k, args.split_seed)?.0,
        None => ds,
    };
    let x = feature_matrix(&train_ds, args.functional)?;
    let model = uq::train_surrogate(&cfg, x, &train_ds.outputs)?;

    let out = resolve_out(&args.out);
    ensure_parent(&out)?;
    model.save(&out)?;
    println!(
        "trained {} on {} rows (input dim {}) → {}",
        cfg.kind,
        x.rows(),
        x.cols(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// Score a trained surrogate on held-out rows and write calibration
/// reports (normalized residuals, σ_ε distribution).
#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset file to score against.
    #[arg(long)]
    pub data: PathBuf,
    /// Report output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Score the validation remainder of a seeded split (default: all rows).
    #[arg(long = "train-size")]
    pub train_size: Option<usize>,
    /// Split-shuffle seed (must match the one used at training time).
    #[arg(long = "split-seed", default_value_t = 0)]
    pub split_seed: u64,
    /// Prediction seed for the sampling-based variants.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ensemble-size override at prediction time.
    #[arg(long)]
    pub ne: Option<usize>,
    /// Fixed histogram bin count (default: Freedman–Diaconis).
    #[arg(long)]
    pub bins: Option<usize>,
    /// Report name (default: the variant token).
    #[arg(long)]
    pub name: Option<String>,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let model = Surrogate64::load(&args.model)
        .with_context(|| format!("loading {}", args.model.display()))?;
    let ds = datasets::load::<f64>(&args.data)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let scoring = match args.train_size {
        Some(k) => datasets::split(&ds, k, args.split_seed)?.1,
        None => ds,
    };
    let x = matching_features(&model, &scoring)?;
    let posteriors = uq::predict_batch(&model, x, args.seed, args.ne)?;

    let name = args
        .name
        .clone()
        .unwrap_or_else(|| model.kind().token().to_string());
    validate_name(&name)?;
    let bundle = metrics::report(
        &[(name, model.kind(), posteriors)],
        &scoring.outputs,
        args.bins,
    )?;

    let dir = resolve_out(&args.out);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let files = write_reports(&dir, &bundle)?;
    println!("wrote {} report files to {}", files.len(), dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// convergence
// ---------------------------------------------------------------------------

/// Ensemble-size convergence: distance of each truncated ensemble's σ_ε
/// field from a reference-size draw.
#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    /// Trained ensemble model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset providing the query points.
    #[arg(long)]
    pub data: PathBuf,
    /// Curve output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Ensemble sizes to evaluate, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,3,5,10,25,50")]
    pub grid: Vec<usize>,
    /// Reference ensemble size.
    #[arg(long, default_value_t = 100)]
    pub reference: usize,
    /// Query on the validation remainder of a seeded split (default: all rows).
    #[arg(long = "train-size")]
    pub train_size: Option<usize>,
    #[arg(long = "split-seed", default_value_t = 0)]
    pub split_seed: u64,
    /// Prediction seed for the stochastic passes.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Curve-file name stem (default: the variant token).
    #[arg(long)]
    pub name: Option<String>,
}

pub fn convergence(args: &ConvergenceArgs) -> Result<()> {
    let model = Surrogate64::load(&args.model)
        .with_context(|| format!("loading {}", args.model.display()))?;
    let ds = datasets::load::<f64>(&args.data)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let scoring = match args.train_size {
        Some(k) => datasets::split(&ds, k, args.split_seed)?.1,
        None => ds,
    };
    let x = matching_features(&model, &scoring)?;
    let points = uq::convergence_study(&model, x, &args.grid, args.reference, args.seed)?;

    let name = args
        .name
        .clone()
        .unwrap_or_else(|| model.kind().token().to_string());
    validate_name(&name)?;
    let dir = resolve_out(&args.out);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut logpdf = String::from("n_e,log_pdf_diff\n");
    let mut msd = String::from("n_e,mean_sq_diff\n");
    for p in &points {
        logpdf.push_str(&format!("{},{:e}\n", p.n_e, p.log_pdf_diff));
        msd.push_str(&format!("{},{:e}\n", p.n_e, p.mean_sq_diff));
    }
    let logpdf_path = dir.join(format!("{name}_logpdf.csv"));
    let msd_path = dir.join(format!("{name}_msd.csv"));
    std::fs::write(&logpdf_path, logpdf)?;
    std::fs::write(&msd_path, msd)?;
    println!(
        "wrote {} and {} ({} grid points, reference {})",
        logpdf_path.display(),
        msd_path.display(),
        points.len(),
        args.reference
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// Full experiment from a config file:
/// generate → split → train every model → evaluate → report + manifest.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config's `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root seed (overrides the config's `seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue past per-model failures; the exit code still reports the
    /// first failure.
    #[arg(long = "keep-going")]
    pub keep_going: bool,
}

pub fn run(args: &RunArgs) -> Result<()> {
    let raw = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let cfg = ExperimentConfig::from_toml(&raw)
        .with_context(|| format!("config {}", args.config.display()))?;
    let seed = args.seed.unwrap_or(cfg.seed);

    let dir = resolve_out(
        args.out
            .as_deref()
            .or(cfg.output.dir.as_deref())
            .unwrap_or(Path::new("uqbench-run")),
    );
    std::fs::create_dir_all(dir.join("models"))?;
    std::fs::create_dir_all(dir.join("reports"))?;
    let mut files: Vec<PathBuf> = Vec::new();

    // Stage 1: dataset.
    println!(
        "generating {} samples (m = {}, z* = {}, seed {}) ...",
        cfg.dataset.n,
        cfg.dataset.m,
        cfg.dataset.z_star,
        cfg.dataset.seed.unwrap_or(seed)
    );
    let meta = cfg.dataset.generation_meta(seed);
    let ds = datasets::generate(&meta, cfg.dataset.n)?;
    let ds_path = dir.join("dataset.uqb");
    datasets::save(&ds, &ds_path)?;
    println!(
        "  {} rows kept, {} quarantined → {}",
        ds.len(),
        ds.quarantine.len(),
        ds_path.display()
    );
    files.push(ds_path);

    // Stage 2: split.
    let split_seed = cfg.dataset.split_seed.unwrap_or(seed);
    let (train_ds, val_ds) = datasets::split(&ds, cfg.dataset.train_size, split_seed)?;

    // Stage 3: train and score each model.
    let mut entries: Vec<(String, SurrogateKind, Vec<Posterior<f64>>)> = Vec::new();
    let mut first_failure: Option<anyhow::Error> = None;
    for (i, section) in cfg.models.iter().enumerate() {
        let name = section.name();
        println!("training {name} on {} rows ...", train_ds.len());
        match train_and_score(section, i, seed, &train_ds, &val_ds, &dir) {
            Ok((path, kind, posteriors)) => {
                files.push(path);
                entries.push((name, kind, posteriors));
            }
            Err(err) => {
                let err = err.context(format!("model `{name}`"));
                if !args.keep_going {
                    return Err(err);
                }
                eprintln!("warning: {err:#} (continuing)");
                if first_failure.is_none() {
                    first_failure = Some(err);
                }
            }
        }
    }
    if entries.is_empty() {
        return Err(first_failure
            .unwrap_or_else(|| anyhow!("no models were trained"))
            .context("every model failed"));
    }

    // Stage 4: comparison report.
    let bundle = metrics::report(&entries, &val_ds.outputs, cfg.metrics.bins)?;
    files.extend(write_reports(&dir.join("reports"), &bundle)?);

    // Stage 5: manifest.
    let manifest = Manifest::collect(&dir, seed, sha256_bytes(raw.as_bytes()), &files)?;
    let manifest_path = manifest.write(&dir)?;
    println!(
        "wrote {} ({} artifacts)",
        manifest_path.display(),
        manifest.artifacts.len()
    );

    match first_failure {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

fn train_and_score(
    section: &ModelSection,
    index: usize,
    root_seed: u64,
    train_ds: &Dataset<f64>,
    val_ds: &Dataset<f64>,
    dir: &Path,
) -> Result<(PathBuf, SurrogateKind, Vec<Posterior<f64>>)> {
    let cfg = section.surrogate_config(child_seed(root_seed, STREAM_CLI_MODEL + index as u64))?;
    let x_train = feature_matrix(train_ds, section.functional)?;
    let x_val = feature_matrix(val_ds, section.functional)?;
    let model = uq::train_surrogate(&cfg, x_train, &train_ds.outputs)?;
    let path = dir.join("models").join(format!("{}.uqb", section.name()));
    model.save(&path)?;
    let posteriors = uq::predict_batch(
        &model,
        x_val,
        child_seed(root_seed, STREAM_CLI_PREDICT + index as u64),
        None,
    )?;
    Ok((path, cfg.kind, posteriors))
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

/// Summarize any artifact file (dataset, surrogate snapshot) without
/// loading its payload.
#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Artifact file to summarize.
    pub file: PathBuf,
}

pub fn inspect(args: &InspectArgs) -> Result<()> {
    let (meta, sections) = container::read_summary(&args.file)
        .with_context(|| format!("reading {}", args.file.display()))?;
    let kind = meta
        .get("kind")
        .and_then(|v| v.as_str())
        .unwrap_or("unknown");
    println!("{}", args.file.display());
    println!("  kind: {kind}");
    match kind {
        "dataset" => {
            if let Some(m) = meta.get("meta") {
                print_field(m, "seed", "seed");
                print_field(m, "m", "kl modes (m)");
                print_field(m, "z_star", "z*");
                print_field(m, "store_traces", "stores traces");
            }
            let quarantined = meta
                .get("quarantine")
                .and_then(|v| v.as_array())
                .map_or(0, |a| a.len());
            println!("  quarantined rows: {quarantined}");
        }
        "surrogate-model" => {
            print_field(&meta, "variant", "variant");
            print_field(&meta, "input_dim", "input dim");
            print_field(&meta, "members", "members");
            if let Some(e) = meta.get("ensemble").filter(|e| !e.is_null()) {
                print_field(e, "n_e", "ensemble size");
                print_field(e, "kind", "ensemble kind");
            }
        }
        "gp-model" => {
            print_field(&meta, "input_dim", "input dim");
            print_field(&meta, "final_nll", "final NLL");
        }
        _ => {}
    }
    println!("  sections:");
    for s in &sections {
        println!(
            "    {:<16} {:>7} × {:<5} {:>12} bytes  sha256 {}…",
            s.name,
            s.rows,
            s.cols,
            s.len_bytes,
            &s.sha256[..12.min(s.sha256.len())]
        );
    }
    Ok(())
}

fn print_field(value: &serde_json::Value, key: &str, label: &str) {
    if let Some(v) = value.get(key) {
        println!("  {label}: {v}");
    }
}

// ---------------------------------------------------------------------------
// Shared helpers.
// ---------------------------------------------------------------------------

/// Picks the feature matrix a model trains on: KL coefficients by default,
/// the stored initial-condition traces for functional models.
fn feature_matrix(ds: &Dataset<f64>, functional: bool) -> Result<&Mat<f64>> {
    if functional {
        ds.functional_inputs.as_ref().ok_or_else(|| {
            anyhow!("dataset stores no initial-condition traces (regenerate without --no-traces)")
        })
    } else {
        Ok(&ds.inputs)
    }
}

/// Matches a trained model to the dataset block of the same width, so
/// coefficient and functional models evaluate through one code path.
fn matching_features<'a>(model: &Surrogate64, ds: &'a Dataset<f64>) -> Result<&'a Mat<f64>> {
    let dim = model.input_dim();
    if ds.inputs.cols() == dim {
        return Ok(&ds.inputs);
    }
    if let Some(f) = &ds.functional_inputs {
        if f.cols() == dim {
            return Ok(f);
        }
    }
    let traces = ds
        .functional_inputs
        .as_ref()
        .map_or("none".to_string(), |f| f.cols().to_string());
    bail!(
        "model expects {dim}-dimensional inputs; dataset provides {} coefficients (traces: {})",
        ds.inputs.cols(),
        traces
    )
}

#[derive(Serialize)]
struct ModelSummary {
    name: String,
    kind: &'static str,
    rows: usize,
    nr_mean: f64,
    nr_variance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_sigma_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_n: Option<f64>,
}

/// Writes the per-model report files plus a bundle-level `summary.json`;
/// returns every path written, in a deterministic order.
fn write_reports(dir: &Path, bundle: &ComparisonBundle<f64>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for m in &bundle.models {
        let nr_json = dir.join(format!("{}_nr.json", m.name));
        write_json(&nr_json, &m.nr)?;
        files.push(nr_json);
        let nr_csv = dir.join(format!("{}_nr_hist.csv", m.name));
        std::fs::write(&nr_csv, m.nr.histogram.to_csv())?;
        files.push(nr_csv);

        let mut mean_sigma_eps = None;
        let mut sigma_n = None;
        if let Some(u) = &m.uncertainty {
            let u_json = dir.join(format!("{}_sigma_eps.json", m.name));
            write_json(&u_json, u)?;
            files.push(u_json);
            let u_csv = dir.join(format!("{}_sigma_eps_hist.csv", m.name));
            std::fs::write(&u_csv, u.histogram.to_csv())?;
            files.push(u_csv);
            let n = u.sigma_eps_values.len().max(1) as f64;
            mean_sigma_eps = Some(u.sigma_eps_values.iter().sum::<f64>() / n);
            sigma_n = u.sigma_n;
        }
        println!(
            "  {}: NR mean {:+.3}, variance {:.3} over {} rows",
            m.name,
            m.nr.mean,
            m.nr.variance,
            m.nr.z_values.len()
        );
        summaries.push(ModelSummary {
            name: m.name.clone(),
            kind: m.kind.token(),
            rows: m.nr.z_values.len(),
            nr_mean: m.nr.mean,
            nr_variance: m.nr.variance,
            mean_sigma_eps,
            sigma_n,
        });
    }
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &serde_json::json!({ "models": summaries }))?;
    files.push(summary_path);
    Ok(files)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
