//! `kcm`: command-line front end for bootstrap percolation and KCM
//! experiments. Every command writes CSV with a commented preamble.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "kcm", version, about = "Bootstrap percolation and kinetically constrained models")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker thread cap (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file (stdout if absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Flat `key=value` file; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Span probability on the torus, or the closure of a grid file.
    Bootstrap(BootstrapArgs),
    /// Critical probability q_c(n) by coupled bisection.
    Qc(QcArgs),
    /// Critical length L_c(q).
    Lc(LcArgs),
    /// KCM persistence times.
    Sim(SimArgs),
    /// Spectral gap and relaxation time.
    Gap(GapArgs),
    /// Block-event probabilities and λ_Φ.
    Blocks(BlocksArgs),
    /// Canonical-path lengths and congestion on random eligible inputs.
    Paths(PathsArgs),
    /// Hard-crossing failure probabilities on the rectangle ladder.
    Perc(PercArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    Fa2,
    Fakf,
    Fa1f,
    Gg,
    East,
    NorthEast,
    Unconstrained,
    Custom,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: ModelName,
    /// Lattice dimension (defaults to the rank of the geometry, else 2).
    #[arg(long)]
    pub d: Option<usize>,
    /// Threshold for `fakf`.
    #[arg(long)]
    pub k: Option<usize>,
    /// Rule file for `custom`.
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Torus side.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub replicas: u64,
    /// Grid file to close instead of sampling.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Where to write the closed grid.
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QcArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub replicas: u64,
}

#[derive(Args, Debug)]
pub struct LcArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Single q.
    #[arg(long, conflicts_with = "q_grid")]
    pub q: Option<f64>,
    /// Comma-separated q values, run with seeds `seed + index`.
    #[arg(long, value_delimiter = ',')]
    pub q_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1024)]
    pub n_max: usize,
    #[arg(long, default_value_t = 400)]
    pub replicas: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundaryArg {
    Torus,
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StartArg {
    Stationary,
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ObservableArg {
    ReachEmpty,
    FirstUpdate,
}

#[derive(Args, Debug)]
pub struct SimArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Sides, e.g. `16,16`.
    #[arg(long, value_delimiter = ',', required_unless_present = "n", conflicts_with = "n")]
    pub dims: Option<Vec<usize>>,
    /// Side of a cube of dimension `--d` (default 2), instead of `--dims`.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Torus)]
    pub boundary: BoundaryArg,
    #[arg(long)]
    pub q: f64,
    #[arg(long, alias = "tmax", default_value_t = 1e4)]
    pub t_max: f64,
    #[arg(long, default_value_t = 100)]
    pub replicas: u64,
    #[arg(long, value_enum, default_value_t = StartArg::Stationary)]
    pub start: StartArg,
    #[arg(long, value_enum, default_value_t = ObservableArg::ReachEmpty)]
    pub observable: ObservableArg,
    /// Binary event log of replica 0 over the whole horizon.
    #[arg(long)]
    pub event_log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GapArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Torus)]
    pub boundary: BoundaryArg,
    #[arg(long)]
    pub q: f64,
    /// Also diagonalise densely (small classes only).
    #[arg(long)]
    pub dense: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BlockName {
    Fa2,
    Fakf,
    Gg,
}

#[derive(Args, Debug)]
pub struct BlocksArgs {
    #[arg(long = "model", alias = "block", value_enum)]
    pub block: BlockName,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Critical length of the lower-dimensional model (fakf).
    #[arg(long)]
    pub ell: Option<f64>,
    #[arg(long)]
    pub q: f64,
    /// Tuning constant for the formula sides.
    #[arg(long, alias = "A")]
    pub a: Option<f64>,
    /// Explicit sides instead of the formula.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long, default_value_t = 10000)]
    pub replicas: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PathMode {
    #[value(name = "A")]
    A,
    #[value(name = "B")]
    B,
}

#[derive(Args, Debug)]
pub struct PathsArgs {
    #[arg(long, value_enum)]
    pub model: BlockName,
    #[arg(long, value_enum)]
    pub mode: PathMode,
    /// Block sides.
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    #[arg(long, default_value_t = 1000)]
    pub samples: u64,
}

#[derive(Args, Debug)]
pub struct PercArgs {
    /// Occupation probability.
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 6)]
    pub nmax: u32,
    #[arg(long, default_value_t = 10000)]
    pub replicas: u64,
}

fn main() -> ExitCode {
    let argv = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
