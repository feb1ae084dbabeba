//! `nagumo`: mesh generation, mesh diagnostics, simulation runs and
//! convergence studies from the command line.
//!
//! Exit status: 0 success, 1 general error, 2 invalid mesh, 3 only the
//! nonobtuse angle condition holds, 4 neither angle condition holds,
//! 5 a step violated the time-step window under strict enforcement.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "nagumo",
    version,
    about = "Finite element solver for anisotropic Nagumo-type equations"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate or import a mesh, print its sizes and save it.
    Mesh(MeshArgs),
    /// Print the angle-condition report of a mesh for a diffusion tensor.
    Diagnose(DiagnoseArgs),
    /// Run a simulation from a config file and/or flags.
    Solve(Box<SolveArgs>),
    /// Run a time or space convergence study on the first example.
    Converge(ConvergeArgs),
    /// Tabulate the run summaries found in a directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct MeshSourceArgs {
    /// Structured generator: right45, right135 or acute8.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    /// Domain as x0,x1,y0,y1.
    #[arg(long, allow_hyphen_values = true)]
    pub rect: Option<String>,
    /// Read a mesh file instead of generating one.
    #[arg(long = "import", value_name = "FILE")]
    pub import: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[command(flatten)]
    pub source: MeshSourceArgs,
    /// Output file (default: mesh.txt in the output directory).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "NAGUMO_OUTPUT_DIR", default_value = "out")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub source: MeshSourceArgs,
    /// ex1, ex2, ex3, identity or d11,d12,d22.
    #[arg(long, default_value = "identity")]
    pub diffusion: String,
    /// How variable tensors are reduced per element: centroid, vertex or
    /// quadrature.
    #[arg(long, default_value = "centroid")]
    pub averaging: String,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// ex1, ex2 or ex3.
    #[arg(long)]
    pub problem: Option<String>,
    /// Nagumo parameter.
    #[arg(long)]
    pub a: Option<f64>,
    /// Constant diffusion d11,d12,d22 replacing the problem's tensor.
    #[arg(long)]
    pub diffusion: Option<String>,
    #[arg(long)]
    pub t_final: Option<f64>,
    #[command(flatten)]
    pub mesh: MeshSourceArgs,
    /// em, im, heim1 or heim2.
    #[arg(long)]
    pub treatment: Option<String>,
    /// consistent or lumped.
    #[arg(long)]
    pub lumping: Option<String>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// off, warn or strict.
    #[arg(long)]
    pub enforcement: Option<String>,
    /// Relative residual tolerance of the linear solver.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Range lo,hi for the step windows instead of the current solution range.
    #[arg(long, allow_hyphen_values = true)]
    pub window_range: Option<String>,
    /// Comma-separated subset of csv,json,svg,ppm.
    #[arg(long)]
    pub formats: Option<String>,
    #[arg(long, env = "NAGUMO_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    /// time or space.
    #[arg(long, default_value = "time")]
    pub mode: String,
    #[arg(long)]
    pub levels: Option<usize>,
    /// Subdivisions per side (time) or of the coarsest mesh (space).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub treatment: Option<String>,
    #[arg(long)]
    pub lumping: Option<String>,
    /// Time mode only: exact or reference.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long, env = "NAGUMO_OUTPUT_DIR", default_value = "out")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory searched (recursively) for summary.json files.
    #[arg(env = "NAGUMO_OUTPUT_DIR", default_value = "out")]
    pub dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let from_config = match &cli.command {
        Command::Solve(a) => a
            .config
            .as_deref()
            .and_then(|p| config::RunConfig::load(p).ok())
            .and_then(|c| c.output.verbosity),
        _ => None,
    };
    let level = match (cli.verbose, from_config) {
        (0, Some(level)) => level,
        (0, None) => "warn".into(),
        (1, _) => "info".into(),
        _ => "debug".into(),
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Mesh(a) => commands::mesh(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Converge(a) => commands::converge(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
