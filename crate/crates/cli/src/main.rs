//! `latfield`: reproducible experiment driver for learning and simulating
//! discrete variational field theories. Subcommands cover data generation,
//! training, simulation, evaluation, travelling-wave search and the
//! reduced-order baseline; every run echoes its configuration and writes
//! versioned, deterministic artifacts.

mod artifacts;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use latfield::solver::PropagationMode;

#[derive(Parser)]
#[command(
    name = "latfield",
    version,
    about = "Learn, simulate and analyze discrete variational field theories"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate reference trajectories and a stencil-tuple manifest
    GenData(GenDataArgs),
    /// Fit a neural density to a generated dataset
    Train(TrainArgs),
    /// Propagate a checkpointed density from initial data
    Simulate(SimulateArgs),
    /// Compare a predicted field against a reference
    Eval(EvalArgs),
    /// Search for a travelling wave of a checkpointed density
    FindTw(FindTwArgs),
    /// Fit the reduced-order baseline: PCA basis plus latent density
    Rom(RomArgs),
}

#[derive(Args)]
pub struct GenDataArgs {
    /// Experiment configuration (TOML)
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Master seed override
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory override
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Stencil extraction stride override
    #[arg(long, value_name = "S")]
    pub stride: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Experiment configuration (TOML)
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Dataset directory written by gen-data
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Master seed override
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory override
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Re-extract tuples at this stride instead of the manifest's
    #[arg(long, value_name = "S")]
    pub stride: Option<usize>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Density checkpoint to integrate
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Field CSV providing the starting slices
    #[arg(long, value_name = "PATH")]
    pub init: PathBuf,
    /// Number of new time slices to compute
    #[arg(long, value_name = "N")]
    pub steps: usize,
    /// Integrator: whole-slice Newton or vertex-by-vertex sweeps
    #[arg(long, value_enum, default_value_t = ModeName::Timeslice)]
    pub mode: ModeName,
    /// How many rows of the init file to start from (1 needs a
    /// velocity-linear density)
    #[arg(long, value_name = "N", default_value_t = 2)]
    pub init_rows: usize,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Predicted field CSV
    #[arg(long, value_name = "PATH")]
    pub predicted: PathBuf,
    /// Reference field CSV
    #[arg(long, value_name = "PATH")]
    pub reference: PathBuf,
    /// Optional output directory for metrics and per-row error CSV
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FindTwArgs {
    /// Experiment configuration (TOML; grid and search knobs)
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Density checkpoint to search
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Start from this profile file instead of the dispersion guess
    #[arg(long, value_name = "PATH")]
    pub profile: Option<PathBuf>,
    /// Standard deviation of the perturbation on the initial guess
    #[arg(long, value_name = "SIGMA")]
    pub noise: Option<f64>,
    /// Master seed override
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory override
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct RomArgs {
    /// Experiment configuration (TOML; [rom] section)
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Dataset directory written by gen-data
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Master seed override
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory override
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeName {
    /// Vertex-by-vertex row sweeps (seven-point theories)
    Stencil,
    /// Whole-row Newton steps
    Timeslice,
}

impl ModeName {
    pub fn label(self) -> &'static str {
        match self {
            ModeName::Stencil => "stencil",
            ModeName::Timeslice => "timeslice",
        }
    }
}

impl From<ModeName> for PropagationMode {
    fn from(m: ModeName) -> PropagationMode {
        match m {
            ModeName::Stencil => PropagationMode::StencilSweep,
            ModeName::Timeslice => PropagationMode::Timeslice,
        }
    }
}

/// Stable exit codes, one per error category, so scripts can branch on the
/// failure class without scraping stderr.
fn exit_code(category: &str) -> u8 {
    match category {
        "shape" => 10,
        "sizing" => 11,
        "misuse" => 12,
        "input" => 13,
        "singular" => 14,
        "no-convergence" => 15,
        "capability" => 16,
        "non-finite" => 17,
        "parse" => 18,
        "io" => 19,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::GenData(a) => run::gen_data(a),
        Cmd::Train(a) => run::train_cmd(a),
        Cmd::Simulate(a) => run::simulate(a),
        Cmd::Eval(a) => run::eval(a),
        Cmd::FindTw(a) => run::find_tw(a),
        Cmd::Rom(a) => run::rom_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(e.category()))
        }
    }
}
