//! Command-line runner for seed sweeps and dataset generation.
//!
//! Exit codes: 0 success, 1 bad configuration or I/O, 2 numerical failure,
//! 3 finished but some trajectories were excluded.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lqr_influence::experiment::{run_experiment, ExperimentConfig, ExperimentReport};
use lqr_influence::sysid::Solver;
use lqr_influence::systems::{generate_dataset, GenerationConfig, SystemKind, SystemSpec};
use lqr_influence::Error;

#[derive(Parser)]
#[command(
    name = "lqr-influence",
    version,
    about = "Trajectory influence on a learned LQR controller's cost"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        /// Skip the exact leave-one-out sweep (scores and timings only).
        #[arg(long)]
        no_exact: bool,
        /// Comma-separated seeds replacing the config's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Write one benchmark dataset as JSON.
    Generate {
        /// dc_motor, msd, uav_hover or uav_mission.
        system: SystemKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Dense,
    Cg,
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::InvalidDataset(_) | Error::InvalidK { .. } => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let mut cfg = ExperimentConfig::from_json_str(&text)?;
    // dataset paths are relative to the config file, not the working directory
    if let Some(ds) = &cfg.dataset {
        if ds.is_relative() {
            let base = path.parent().unwrap_or(Path::new(""));
            cfg.dataset = Some(base.join(ds));
        }
    }
    Ok(cfg)
}

fn write(path: PathBuf, contents: String) -> Result<(), Failure> {
    fs::write(&path, contents).map_err(|e| io_failure(&path, e))
}

fn write_outputs(report: &ExperimentReport, out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    write(out.join("report.json"), report.to_json(true))?;
    for s in &report.seeds {
        write(
            out.join(format!("scores_seed{}.csv", s.seed)),
            s.scores.to_csv(),
        )?;
    }
    write(out.join("scatter.csv"), report.scatter_csv())?;
    write(out.join("diagnostics.csv"), report.diagnostics_csv())
}

fn summarize(report: &ExperimentReport) {
    let agg = &report.aggregate;
    println!("{}: {} seed(s)", report.system.name(), report.seeds.len());
    let rows = [
        ("spearman fixed", &agg.spearman_fixed),
        ("spearman stoch", &agg.spearman_stoch),
        ("jaccard fixed", &agg.jaccard_fixed),
        ("jaccard stoch", &agg.jaccard_stoch),
        ("held-out spearman", &agg.heldout_spearman),
        ("speedup", &report.timings.speedup),
    ];
    for (label, a) in rows {
        if let Some(a) = a {
            println!("  {label:<18} {:.3} ± {:.3}", a.mean, a.std);
        }
    }
    for s in report.seeds.iter().filter(|s| !s.excluded.is_empty()) {
        println!("  seed {}: excluded {:?}", s.seed, s.excluded);
    }
}

fn run(
    config: &Path,
    out: &Path,
    solver: Option<SolverArg>,
    no_exact: bool,
    seeds: Option<Vec<u64>>,
) -> Result<bool, Failure> {
    let mut cfg = load_config(config)?;
    if let Some(s) = solver {
        cfg.solver = match s {
            SolverArg::Dense => Solver::Dense,
            SolverArg::Cg => Solver::Cg,
        };
    }
    if no_exact {
        cfg.run_exact_loto = false;
    }
    if let Some(seeds) = seeds {
        cfg.seeds = seeds;
    }
    cfg.validate()?;
    let report = run_experiment(&cfg)?;
    write_outputs(&report, out)?;
    summarize(&report);
    Ok(report.has_exclusions())
}

fn generate(
    kind: SystemKind,
    seed: u64,
    trajectories: Option<usize>,
    out: &Path,
) -> Result<(), Failure> {
    let mut gen = GenerationConfig::preset(kind, seed);
    if let Some(n) = trajectories {
        gen.n_trajectories = n;
    }
    let data = generate_dataset(&SystemSpec::preset(kind), &gen)?;
    write(out.to_path_buf(), data.to_json_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            out,
            solver,
            no_exact,
            seeds,
        } => run(&config, &out, solver, no_exact, seeds),
        Command::Generate {
            system,
            seed,
            trajectories,
            out,
        } => generate(system, seed, trajectories, &out).map(|_| false),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(3),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
