use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;
mod pipeline;

use error::CliError;

/// Event-camera toolkit for low-light recordings: simulate, suppress trails,
/// voxelize and score.
#[derive(Debug, Parser)]
#[command(name = "evlume", version, about)]
#[command(
    after_help = "Environment:\n  EVLUME_THREADS  worker threads for parallel stages (0 or unset = all cores)\n\n\
Exit codes: 0 success, 2 usage or validation error, 3 I/O error"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scene file into an EVT1 event stream.
    Simulate(SimulateArgs),
    /// Suppress trailing events by realigning chain timestamps.
    Ets(EtsArgs),
    /// Accumulate events into a VOX1 voxel grid.
    Voxelize(VoxelizeArgs),
    /// Write a max-normalized per-pixel event count image.
    Density(DensityArgs),
    /// Compare two PGM images.
    Metrics(MetricsArgs),
    /// Run a chain of stages from a config file and write a manifest.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene description (key = value lines).
    #[arg(long)]
    pub scene: PathBuf,
    /// Output EVT1 file.
    #[arg(long)]
    pub out: PathBuf,
    /// Contrast threshold C in natural-log units [default: 0.3].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Low-pass integration grid in µs; overrides the scene's `grid_us`
    /// [default: scene value, else 1].
    #[arg(long)]
    pub grid_us: Option<u64>,
    /// Noise seed; overrides the scene's `seed` [default: scene value, else 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EtsArgs {
    /// Input EVT1 file.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output EVT1 file.
    #[arg(long)]
    pub out: PathBuf,
    /// Chain intervals must stay strictly below this, µs.
    #[arg(long, default_value_t = 1000)]
    pub max_interval_us: u64,
    /// Minimum events in a chain.
    #[arg(long, default_value_t = 3)]
    pub min_chain: usize,
    /// Spacing of realigned followers, µs.
    #[arg(long, default_value_t = 1)]
    pub realign_us: u64,
    /// Write a key=value trail statistics report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VoxelizeArgs {
    /// Input EVT1 file.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Window start, µs (inclusive).
    #[arg(long)]
    pub t0: u64,
    /// Window end, µs (inclusive).
    #[arg(long)]
    pub t1: u64,
    /// Number of temporal bins.
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
    /// Output VOX1 file.
    #[arg(long)]
    pub out: PathBuf,
    /// WGT1 weight table; replaces the triangular kernel. Its bin count wins
    /// over --bins.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Normalize time by the first and last event in the window instead of
    /// by the window itself.
    #[arg(long)]
    pub strict_eq5: bool,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    /// Input EVT1 file.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Window start, µs (inclusive).
    #[arg(long)]
    pub t0: u64,
    /// Window end, µs (exclusive).
    #[arg(long)]
    pub t1: u64,
    /// Output PGM file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Reference image (PGM).
    #[arg(long)]
    pub a: PathBuf,
    /// Test image (PGM).
    #[arg(long)]
    pub b: PathBuf,
    /// Print SSIM. With no metric flag, all metrics are printed.
    #[arg(long)]
    pub ssim: bool,
    /// Print MSE.
    #[arg(long)]
    pub mse: bool,
    /// Print lightness-order error.
    #[arg(long)]
    pub loe: bool,
    /// LOE downsampling grid size.
    #[arg(long, default_value_t = 100)]
    pub loe_grid: usize,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Pipeline config (key = value lines).
    #[arg(long)]
    pub config: PathBuf,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("EVLUME_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("EVLUME_THREADS must be a non-negative integer, got `{raw}`")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Ets(a) => commands::ets(&a),
        Command::Voxelize(a) => commands::voxelize(&a),
        Command::Density(a) => commands::density(&a),
        Command::Metrics(a) => commands::metrics(&a),
        Command::Pipeline(a) => pipeline::run(&a.config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evlume: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
