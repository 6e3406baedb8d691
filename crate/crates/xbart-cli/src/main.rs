//! `xbart` command line: fit a model from CSV, predict with a saved model,
//! or run the synthetic benchmark suite.

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;
use xbart::bench::{run_benchmark, BenchCell};
use xbart::csv_io::{load_csv, load_feature_matrix, write_predictions};
use xbart::dgp::DgpSpec;
use xbart::model::{dataset_checksum, load_model, save_model, ModelArtifact, TrainingMeta};
use xbart::sampler::Sampler;
use xbart::XbartConfig;

#[derive(Parser)]
#[command(name = "xbart", version, about = "Accelerated Bayesian additive regression trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV file and save the artifact.
    Fit(FitArgs),
    /// Predict with a saved model on a CSV file (one prediction per row).
    Predict(PredictArgs),
    /// Run a benchmark suite of synthetic DGP cells.
    Bench(BenchArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV.
    #[arg(long)]
    data: PathBuf,
    /// Target column (name, or index without --no-header).
    #[arg(long)]
    target: String,
    /// Treat the first row as data instead of a header.
    #[arg(long)]
    no_header: bool,
    /// Number of trees L (default: max(1, round((ln n)^(ln ln n) / 4))).
    #[arg(long)]
    trees: Option<usize>,
    /// Sweeps K.
    #[arg(long, default_value_t = 40)]
    sweeps: usize,
    /// Burn-in sweeps I.
    #[arg(long, default_value_t = 15)]
    burnin: usize,
    /// Leaf prior variance tau (default: 0.3 var(y) / L).
    #[arg(long)]
    tau: Option<f64>,
    /// Depth-prior base.
    #[arg(long, default_value_t = 0.95)]
    alpha: f64,
    /// Depth-prior exponent.
    #[arg(long, default_value_t = 1.25)]
    beta: f64,
    /// Cut-point budget C (default: max(ceil(sqrt(n)), 100)).
    #[arg(long)]
    cutpoints: Option<usize>,
    /// Variables per split decision after burn-in (default: all).
    #[arg(long)]
    mtry: Option<usize>,
    /// RNG seed; every random choice flows from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Experimental: sweep-level Metropolis-Hastings accept/reject.
    #[arg(long)]
    mh: bool,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Saved model artifact.
    #[arg(long)]
    model: PathBuf,
    /// Input CSV (features in training order; a training target column is
    /// dropped when present).
    #[arg(long)]
    data: PathBuf,
    /// Treat the first row as data instead of a header.
    #[arg(long)]
    no_header: bool,
    /// Output CSV of predictions.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite file (JSON) listing DGP x config cells.
    #[arg(long)]
    suite: PathBuf,
    /// Replications per cell.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Output CSV of per-replication results.
    #[arg(long)]
    out: PathBuf,
}

/// One suite-file cell: a DGP plus optional config overrides.
#[derive(Deserialize)]
struct SuiteCell {
    #[serde(flatten)]
    dgp: DgpSpec,
    #[serde(default)]
    config: SuiteConfig,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SuiteConfig {
    trees: Option<usize>,
    sweeps: Option<usize>,
    burnin: Option<usize>,
    tau: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    cutpoints: Option<usize>,
    mtry: Option<usize>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct SuiteFile {
    cells: Vec<SuiteCell>,
}

fn run_fit(args: &FitArgs) -> xbart::Result<()> {
    let loaded = load_csv(&args.data, &args.target, !args.no_header)?;
    let config = XbartConfig {
        num_trees: args.trees,
        num_sweeps: args.sweeps,
        burnin: args.burnin,
        tau: args.tau,
        alpha: args.alpha,
        beta: args.beta,
        num_cutpoints: args.cutpoints,
        mtry: args.mtry,
        seed: args.seed,
        mh: args.mh,
        ..XbartConfig::default()
    };
    let sampler = Sampler::new(&loaded.dataset, &config)?;
    let resolved = sampler.config().clone();
    eprintln!(
        "fitting: n={}, V={}, trees={}, sweeps={}, burnin={}, cutpoints={}, seed={}",
        loaded.dataset.n(),
        loaded.dataset.num_vars(),
        resolved.num_trees,
        resolved.num_sweeps,
        resolved.burnin,
        resolved.num_cutpoints,
        resolved.seed
    );
    let metadata = TrainingMeta {
        n: loaded.dataset.n(),
        num_vars: loaded.dataset.num_vars(),
        feature_names: loaded.feature_names.clone(),
        target_name: loaded.target_name.clone(),
        data_sha256: dataset_checksum(&loaded.dataset),
    };
    let draws = sampler.fit()?;
    let artifact = ModelArtifact::new(resolved, metadata, draws);
    save_model(&artifact, &args.out)?;
    eprintln!("model written to {}", args.out.display());
    Ok(())
}

fn run_predict(args: &PredictArgs) -> xbart::Result<()> {
    let artifact = load_model(&args.model)?;
    let x = load_feature_matrix(
        &args.data,
        !args.no_header,
        &artifact.metadata.feature_names,
        &artifact.metadata.target_name,
    )?;
    let predictions = artifact.predict(&x)?;
    write_predictions(File::create(&args.out)?, &predictions)?;
    eprintln!("{} predictions written to {}", predictions.len(), args.out.display());
    Ok(())
}

fn run_bench(args: &BenchArgs) -> xbart::Result<()> {
    let text = std::fs::read_to_string(&args.suite)?;
    let suite: SuiteFile = serde_json::from_str(&text)
        .map_err(|e| xbart::XbartError::InvalidInput(format!("bad suite file: {e}")))?;
    let cells: Vec<BenchCell> = suite
        .cells
        .into_iter()
        .map(|cell| BenchCell {
            config: XbartConfig {
                num_trees: cell.config.trees,
                num_sweeps: cell.config.sweeps.unwrap_or(40),
                burnin: cell.config.burnin.unwrap_or(15),
                tau: cell.config.tau,
                alpha: cell.config.alpha.unwrap_or(0.95),
                beta: cell.config.beta.unwrap_or(1.25),
                num_cutpoints: cell.config.cutpoints,
                mtry: cell.config.mtry,
                seed: cell.config.seed.unwrap_or(cell.dgp.seed),
                ..XbartConfig::default()
            },
            dgp: cell.dgp,
        })
        .collect();
    let report = run_benchmark(&cells, args.reps)?;
    report.write_csv(File::create(&args.out)?)?;
    print!("{}", report.summary_table());
    eprintln!("per-replication rows written to {}", args.out.display());
    if !report.failures.is_empty() {
        return Err(xbart::XbartError::Numeric(format!(
            "{} benchmark cell(s) failed",
            report.failures.len()
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Predict(args) => run_predict(args),
        Command::Bench(args) => run_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
