//! `uqbench` — reproducible uncertainty-quantification experiments for
//! dispersive-wave surrogates.
//!
//! Exit codes: 0 on success, 2 for configuration/usage errors, 3 when
//! dataset generation exceeds the blow-up budget, 4 when training or
//! evaluation diverges.

mod artifacts;
mod commands;
mod config;

use clap::{Parser, Subcommand};
use uqbench_core::datasets::DatasetError;
use uqbench_core::gp::GpError;
use uqbench_core::metrics::MetricsError;
use uqbench_core::nn::NnError;
use uqbench_core::uq::UqError;

/// Cross-comparison of uncertainty-quantification schemes for
/// dispersive-wave surrogate models.
#[derive(Parser)]
#[command(name = "uqbench", version, about, propagate_version = true)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from the built-in wave solver.
    Generate(commands::GenerateArgs),
    /// Train one surrogate model.
    Train(commands::TrainArgs),
    /// Score a trained surrogate and write calibration reports.
    Evaluate(commands::EvaluateArgs),
    /// Ensemble-size convergence curves.
    Convergence(commands::ConvergenceArgs),
    /// Full experiment from a config file, with a digest manifest.
    Run(commands::RunArgs),
    /// Summarize an artifact file.
    Inspect(commands::InspectArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // First (and only) global-pool initialization; a failure here means
        // the default pool already spun up, which changes nothing below.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let result = match &cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Train(args) => commands::train(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Convergence(args) => commands::convergence(args),
        Command::Run(args) => commands::run(args),
        Command::Inspect(args) => commands::inspect(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

/// Maps an error chain onto the exit-code contract. Anything not
/// recognized as a blow-up (3) or a divergence (4) is a configuration
/// problem (2).
fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<DatasetError>() {
            if matches!(e, DatasetError::BlowupBudgetExceeded { .. }) {
                return 3;
            }
        }
        if let Some(e) = cause.downcast_ref::<GpError>() {
            if gp_divergence(e) {
                return 4;
            }
        }
        if let Some(e) = cause.downcast_ref::<NnError>() {
            if nn_divergence(e) {
                return 4;
            }
        }
        if let Some(e) = cause.downcast_ref::<UqError>() {
            // The surrogate layer wraps engine errors transparently, so
            // inspect its payload rather than relying on the source chain.
            match e {
                UqError::Gp(g) if gp_divergence(g) => return 4,
                UqError::Nn(n) if nn_divergence(n) => return 4,
                _ => {}
            }
        }
        if let Some(e) = cause.downcast_ref::<MetricsError>() {
            if matches!(e, MetricsError::ZeroUncertainty { .. }) {
                return 4;
            }
        }
    }
    2
}

fn gp_divergence(e: &GpError) -> bool {
    matches!(
        e,
        GpError::AllStartsFailed { .. } | GpError::CholeskyFailure { .. }
    )
}

fn nn_divergence(e: &NnError) -> bool {
    matches!(e, NnError::DivergedLoss { .. })
}
