//! `takedown`: calibration, network generation, single runs, sweeps and
//! robustness batteries for the takedown-delay simulator.
//!
//! Exit codes: 0 success, 1 internal error, 2 input or data error,
//! 3 a single run that did not converge.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::Failure;
use crate::config::ConfigFile;

#[derive(Parser, Debug)]
#[command(name = "takedown", version, about = "Takedown-delay simulator")]
struct Cli {
    /// TOML configuration; unset keys take the desk-preset defaults
    /// (print them with `takedown config`)
    #[arg(long, global = true, env = "TAKEDOWN_CONFIG")]
    config: Option<PathBuf>,

    /// Log progress to stderr (RUST_LOG takes precedence)
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit exponential takedown delays to a statement-of-reasons file
    Fit(FitArgs),
    /// Generate or reduce a follower network and write it as an edge list
    Netgen(NetgenArgs),
    /// Run one simulation to convergence
    Simulate(SimulateArgs),
    /// Sweep the takedown delay and write mean reductions with bootstrap CIs
    Sweep(SweepArgs),
    /// Run a robustness battery and write pairwise Mann-Whitney tests
    Robustness(RobustnessArgs),
    /// Re-read an output file and print it, or summarise it
    Report(ReportArgs),
    /// Print the fully-default configuration file
    Config,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Statement-of-reasons CSV or TSV
    pub sor_file: PathBuf,
    /// Keep only records of this platform
    #[arg(long)]
    pub platform: Option<String>,
    /// One fit per (platform, category) instead of per platform
    #[arg(long)]
    pub by_category: bool,
    #[arg(long, value_enum, default_value_t = FitChoice::Both)]
    pub method: FitChoice,
    /// Groups with fewer delays are reported unfitted
    #[arg(long, default_value_t = 30)]
    pub min_samples: usize,
    /// Keep records whose decision ground is not illegal content
    #[arg(long)]
    pub all_grounds: bool,
    /// Write one CCDF file per fitted group into this directory
    #[arg(long)]
    pub ccdf_dir: Option<PathBuf>,
    /// Fit report destination (default stdout)
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FitChoice {
    Both,
    #[value(name = "logccdf-ls")]
    LogCcdfLs,
    Mle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NetMode {
    Rwg,
    Kcore,
    Thin,
    ChungLu,
    /// A named preset (see --preset)
    Preset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NetPreset {
    Desk,
    Paper,
    PaperWide,
    DeskEmpiricalStyle,
}

#[derive(Args, Debug)]
pub struct NetgenArgs {
    #[arg(long, value_enum, default_value_t = NetMode::Rwg)]
    pub mode: NetMode,
    #[arg(long, value_enum, default_value_t = NetPreset::Desk)]
    pub preset: NetPreset,
    /// Final node count (rwg, chung-lu)
    #[arg(long, default_value_t = 1_000)]
    pub n: usize,
    /// Seed clique size (rwg); default k_out + 1
    #[arg(long)]
    pub n_init: Option<usize>,
    /// Follow links per new node (rwg)
    #[arg(long, default_value_t = 20)]
    pub k_out: usize,
    /// Probability of following a friend of the first pick (rwg)
    #[arg(long, default_value_t = 0.5)]
    pub p_friend: f64,
    /// Average out-degree (chung-lu)
    #[arg(long, default_value_t = 20.0)]
    pub avg_degree: f64,
    /// Degree-distribution exponent (chung-lu)
    #[arg(long, default_value_t = 2.5)]
    pub exponent: f64,
    /// Input edge list (kcore, thin)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Core order (kcore)
    #[arg(long, default_value_t = 94)]
    pub k: u32,
    /// Degree used for peeling (kcore): total, in or out
    #[arg(long, default_value = "total")]
    pub degree: String,
    /// Edges to keep (thin; optional for kcore, where the default keeps the
    /// input's average degree)
    #[arg(long)]
    pub target_edges: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Edge-list destination (default stdout; the summary then goes to stderr)
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Expected takedown delay in days (default [removal].tau; unset = no removal)
    #[arg(long)]
    pub tau: Option<f64>,
    /// Run seed (default [experiment].seed = 1)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the per-step trace here
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Skip the removal-free comparison run
    #[arg(long)]
    pub no_baseline: bool,
    /// Summary destination (default stdout)
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Comma-separated delays in days (default [experiment].tau_grid)
    #[arg(long, value_delimiter = ',')]
    pub tau_grid: Option<Vec<f64>>,
    /// Runs per cell (default [experiment].runs = 20)
    #[arg(long)]
    pub runs: Option<usize>,
    /// Base seed (default [experiment].seed = 1)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, 0 = all cores (default [experiment].workers = 0)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Result destination (default stdout)
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RobustnessArgs {
    /// p-distributions, s_H, p-values or network
    #[arg(long, default_value = "p-distributions")]
    pub kind: String,
    /// Runs per variant and delay (default [experiment].runs = 20)
    #[arg(long)]
    pub runs: Option<usize>,
    /// Base seed (default [experiment].seed = 1)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, 0 = all cores (default [experiment].workers = 0)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Family-wise significance level
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Per-run reductions of every variant are written here
    #[arg(long)]
    pub distributions: Option<PathBuf>,
    /// Pairwise table destination (default stdout)
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FileKind {
    Auto,
    Sweep,
    Pairwise,
    Distributions,
    Fit,
    Ccdf,
    Trace,
    Edges,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// A file written by another subcommand
    pub file: PathBuf,
    /// File type; auto detects it from the header
    #[arg(long, value_enum, default_value_t = FileKind::Auto)]
    pub kind: FileKind,
    /// Print a human-readable summary instead of the re-serialised file
    #[arg(long)]
    pub summary: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = || -> Result<ConfigFile, Failure> {
        match &cli.config {
            Some(path) => ConfigFile::load(path).map_err(Failure::Data),
            None => Ok(ConfigFile::default()),
        }
    };
    match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Netgen(a) => commands::netgen(a),
        Command::Simulate(a) => commands::simulate(&config()?, a),
        Command::Sweep(a) => commands::sweep(&config()?, a),
        Command::Robustness(a) => commands::robustness(&config()?, a),
        Command::Report(a) => commands::report(a),
        Command::Config => {
            print!("{}", config::DEFAULT_CONFIG);
            Ok(())
        }
    }
}
