use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "dipolar-chains", version, about = "Dipolar chains of tilted dipoles in stacked layers")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Run the built-in consistency checks on the results
    #[arg(long, global = true)]
    pub verify: bool,

    /// Seed for the stochastic solver
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Configuration file (`key = value`, one section per subcommand)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// In-plane potential on a 2D grid, plus the y = 0 cuts
    PotentialGrid(commands::GridArgs),
    /// Potential along y = 0 for a list of tilt angles
    PotentialCut(commands::CutArgs),
    /// Expansion coefficients a0, v0, alpha0, beta0 versus theta
    Landscape(commands::LandscapeArgs),
    /// Three-body energies versus U for several methods
    EnergySweep(commands::SweepArgs),
    /// Per-layer probability densities of the harmonic chain state
    Density(commands::DensityArgs),
    /// Stochastic variational reference calculation
    SvmRun(commands::SvmArgs),
}

fn configure_threads() -> Result<Option<usize>, Failure> {
    let Ok(raw) = std::env::var("DIPOLAR_CHAINS_THREADS") else {
        return Ok(None);
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
        Failure::Validation(format!("DIPOLAR_CHAINS_THREADS must be a positive integer, got '{raw}'"))
    })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Validation(format!("cannot configure thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    log::info!("built without the parallel feature; DIPOLAR_CHAINS_THREADS={n} has no effect");
    Ok(Some(n))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = configure_threads()?;
    let cfg = match &cli.common.config {
        Some(p) => config::ConfigFile::load(p)?,
        None => config::ConfigFile::default(),
    };
    let ctx = commands::Context::new(&cli.common, &cfg, threads);
    match cli.command {
        Command::PotentialGrid(a) => commands::potential_grid(&ctx, a),
        Command::PotentialCut(a) => commands::potential_cut(&ctx, a),
        Command::Landscape(a) => commands::landscape(&ctx, a),
        Command::EnergySweep(a) => commands::energy_sweep(&ctx, a),
        Command::Density(a) => commands::density(&ctx, a),
        Command::SvmRun(a) => commands::svm_run(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
