//! `noncomm` command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::config::{load_curves, RunConfig};
use super::{select_bound_curve, sweep_grid, ExperimentError, GridResult};
use crate::clustering;
use crate::measure;
use crate::sme::{self, write_states_csv};

#[derive(Debug, Parser)]
#[command(name = "noncomm", version, about = "Simultaneous continuous qubit measurement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one ensemble and write its final states.
    Simulate(RunArgs),
    /// Simulate, cluster and measure one (κ, θ) point.
    Measure(RunArgs),
    /// Measure every cell of the (κ, θ) grid.
    Sweep(RunArgs),
    /// Choose the bound curve whose two sides have the least Φ overlap.
    BoundSelect(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    dump_states: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn simulate(cfg: &RunConfig, args: &RunArgs) -> Result<(), Failure> {
    let m = cfg.require_measurement()?;
    let set = sme::simulate_ensemble(&cfg.rho0, &m, cfg.n).map_err(runtime)?;
    if set.is_degenerate() {
        return Err(Failure::Runtime("degenerate ensemble: all final states coincide".into()));
    }
    set.write_csv(create(&args.out, "finalstates.csv")?).map_err(runtime)
}

fn measure_point(cfg: &RunConfig, args: &RunArgs) -> Result<(), Failure> {
    let m = cfg.require_measurement()?;
    let set = sme::simulate_ensemble(&cfg.rho0, &m, cfg.n).map_err(runtime)?;
    if args.dump_states {
        set.write_csv(create(&args.out, "finalstates.csv")?).map_err(runtime)?;
    }
    let clusters = clustering::kmeans(&set, &cfg.kmeans).map_err(runtime)?;
    let result = measure::measure_clustered(&cfg.rho0, &set, &clusters, &cfg.params).map_err(runtime)?;
    clusters.write_csv(create(&args.out, "clusters.csv")?).map_err(runtime)?;
    write_json(&args.out, "clusters.json", &clusters.sidecar_json())?;
    write_json(&args.out, "measure.json", &result.to_json())
}

fn run_sweep(cfg: &RunConfig, args: &RunArgs) -> Result<GridResult, Failure> {
    let mut sweep = cfg.sweep.clone();
    sweep.retain_states = args.dump_states;
    let grid = sweep_grid(&sweep)?;
    grid.write_csv(create(&args.out, "grid.csv")?)?;
    if let Some(states) = &grid.states {
        for (idx, s) in states.iter().enumerate() {
            let name = format!("finalstates_k{}_t{}.csv", idx / grid.theta_len, idx % grid.theta_len);
            write_states_csv(s, create(&args.out, &name)?).map_err(runtime)?;
        }
    }
    Ok(grid)
}

fn bound_select(cfg: &RunConfig, args: &RunArgs) -> Result<(), Failure> {
    let curves_path = args
        .curves
        .as_ref()
        .ok_or_else(|| Failure::Config("--curves: required for bound-select".into()))?;
    let curves = load_curves(curves_path)?;
    let grid = match &cfg.grid_file {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| Failure::Config(format!("bound_select.grid: {}: {e}", path.display())))?;
            GridResult::read_csv(file)?
        }
        None => run_sweep(cfg, args)?,
    };
    let selection = select_bound_curve(&grid, &curves, cfg.grid_points)?;
    write_json(&args.out, "bound_report.json", &selection)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let (Command::Simulate(args) | Command::Measure(args) | Command::Sweep(args) | Command::BoundSelect(args)) =
        &cli.command;
    let cfg = RunConfig::load(&args.config)?;
    fs::create_dir_all(&args.out).map_err(|e| Failure::Runtime(format!("{}: {e}", args.out.display())))?;
    let pool = match args.threads {
        Some(0) => return Err(Failure::Config("--threads: must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(runtime)?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => simulate(&cfg, a),
        Command::Measure(a) => measure_point(&cfg, a),
        Command::Sweep(a) => run_sweep(&cfg, a).map(|_| ()),
        Command::BoundSelect(a) => bound_select(&cfg, a),
    })
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Config(msg)) => {
            eprintln!("noncomm: configuration error: {msg}");
            1
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("noncomm: {msg}");
            2
        }
    }
}
