//! `lidkit`: generate synthetic manifolds, train noise predictors and run
//! LID estimators from the command line.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or configuration
//! error, 3 training failure, 4 capability mismatch.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lidkit::LidError;

#[derive(Parser, Debug)]
#[command(
    name = "lidkit",
    version,
    about = "Local intrinsic dimension estimation"
)]
struct Cli {
    /// Include wall-clock times and memory samples in outputs. Off by
    /// default so that repeated runs produce identical bytes.
    #[arg(long, global = true)]
    timing: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a synthetic point cloud.
    Gen(GenArgs),
    /// Train a noise-prediction MLP on a point cloud.
    Train(TrainArgs),
    /// Run one estimator over every point of a cloud.
    Estimate(EstimateArgs),
    /// Run a benchmark grid described by a JSON config.
    Bench(BenchArgs),
    /// Error-bundle spectra at one point for several sample counts.
    Spectrum(SpectrumArgs),
    /// Evaluation counts of DSM and FLIPD as the dimension grows.
    Scaling(ScalingArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    family: String,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    /// Number of points.
    #[arg(long = "N", default_value_t = 2000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    permute_dims: bool,
    /// Keep latent coordinates instead of applying a random rotation.
    #[arg(long)]
    no_rotate: bool,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    height: Option<f64>,
    #[arg(long)]
    anchors: Option<usize>,
    #[arg(long)]
    anchor_scale: Option<f64>,
    /// Output path; `.csv` writes text, anything else the binary format.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    cloud: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Loss trace CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    loss_out: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value = "silu")]
    activation: String,
    #[arg(long, default_value = "epsilon")]
    target: String,
    /// Sinusoidal frequencies of the noise-level embedding; 0 selects the
    /// scalar `ln σ` embedding.
    #[arg(long, default_value_t = 16)]
    frequencies: usize,
    #[arg(long, default_value_t = 20_000)]
    batches: usize,
    #[arg(long, default_value_t = 100)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    lr_min: f64,
    #[arg(long, default_value_t = 0.005)]
    sigma_min: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct FieldArgs {
    /// Closed-form field: `affine` or `mixture`.
    #[arg(long, conflicts_with = "checkpoint")]
    oracle: Option<String>,
    /// Trained model checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[command(flatten)]
    field: FieldArgs,
    /// dsm, flipd, nb, eb, mle, twonn (or mle_k50 style).
    #[arg(long)]
    estimator: String,
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Neighbor count for mle / twonn.
    #[arg(long, default_value_t = 50)]
    k: usize,
    /// `exact` or `hutchinson`.
    #[arg(long, default_value = "exact")]
    divergence: String,
    /// Hutchinson probe count.
    #[arg(long, default_value_t = 64)]
    probes: usize,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    /// Singular-value cutoff: `unit` or `relative`.
    #[arg(long, default_value = "unit")]
    cutoff: String,
    /// Evaluate FLIPD at one noised copy of each point.
    #[arg(long)]
    noised_flipd: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix: writes `<out>.csv` and `<out>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[command(flatten)]
    field: FieldArgs,
    #[arg(long, default_value_t = 0)]
    point: usize,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',', default_value = "8,64,256")]
    m: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix: writes `<out>.csv` and `<out>.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ScalingArgs {
    /// Comma-separated ambient dimensions; each uses `d = n/2`.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    m: usize,
    #[arg(long, default_value_t = 64)]
    probes: usize,
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Failure carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }
}

fn exit_code(e: &LidError) -> u8 {
    match e {
        LidError::Capability(_) => 4,
        LidError::TrainingDiverged { .. } => 3,
        LidError::AtPoint { source, .. } => exit_code(source),
        LidError::Evaluation(_) | LidError::DegenerateNeighborhood(_) => 1,
        _ => 2,
    }
}

impl From<LidError> for Failure {
    fn from(e: LidError) -> Self {
        Self {
            code: exit_code(&e),
            error: e.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::usage(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::usage(e)
    }
}

fn init_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("LIDKIT_THREADS") {
        let threads: usize = v.parse().map_err(|_| {
            Failure::usage(anyhow::anyhow!("LIDKIT_THREADS must be a positive integer"))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .map_err(Failure::usage)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train(a),
        Command::Estimate(a) => commands::estimate(a, cli.timing),
        Command::Bench(a) => commands::bench(a, cli.timing),
        Command::Spectrum(a) => commands::spectrum(a),
        Command::Scaling(a) => commands::scaling(a, cli.timing),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
