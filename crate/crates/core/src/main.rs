use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use mobinet::experiment::{self, Table};
use mobinet::{parse_config, run_realization, ExperimentSpec, Policy, RunOptions};

#[derive(Parser)]
#[command(
    name = "mobinet",
    version,
    about = "Packet routing and traffic-driven epidemics among mobile agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: PathBuf,
    /// Overrides rng_seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides policy (greedy | random)
    #[arg(long)]
    policy: Option<Policy>,
    /// Overrides realizations
    #[arg(long)]
    realizations: Option<usize>,
    /// CSV destination; falls back to output_path, then stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// One realization: per-step trace and summary
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write the load distribution here
        #[arg(long)]
        loads: Option<PathBuf>,
    },
    /// Order parameter and travel time over a sweep of R, v or r
    SweepRc {
        #[command(flatten)]
        common: Common,
    },
    /// Steady infected density over a sweep of beta
    SweepBeta {
        #[command(flatten)]
        common: Common,
    },
    /// Critical generation rate by bisection
    FindRc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lo: u32,
        #[arg(long)]
        hi: u32,
        #[arg(long, default_value_t = 1)]
        resolution: u32,
        /// Bisect each realization separately for a standard error
        #[arg(long)]
        per_realization: bool,
    },
    /// Epidemic threshold by bisection
    FindBetac {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = 1.0)]
        hi: f64,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        #[arg(long)]
        per_realization: bool,
    },
    /// Mean-field thresholds for a measured travel time
    Theory {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        avg_t: f64,
    },
}

fn load(common: &Common) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(&common.config).with_context(|| format!("reading {}", common.config.display()))?;
    let mut spec = parse_config(&text).with_context(|| format!("parsing {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        spec.base.rng_seed = seed;
    }
    if let Some(policy) = common.policy {
        spec.policy = policy;
    }
    if let Some(k) = common.realizations {
        spec.realizations = k;
    }
    spec.validate()?;
    Ok(spec)
}

fn emit(table: &Table, common: &Common, spec: &ExperimentSpec) -> Result<()> {
    match common.out.as_ref().or(spec.output_path.as_ref()) {
        Some(path) => table.write(path)?,
        None => print!("{}", table.to_csv()),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, loads } => {
            let spec = load(&common)?;
            let summary = run_realization(&spec.base, spec.policy, spec.base.rng_seed, RunOptions::default())?;
            emit(&experiment::run_table(&summary), &common, &spec)?;
            if let Some(path) = loads {
                experiment::loads_table(&summary).write(&path)?;
            }
            eprint!("{}", experiment::describe_run(&summary));
        }
        Command::SweepRc { common } => {
            let spec = load(&common)?;
            emit(&experiment::sweep_rc(&spec)?, &common, &spec)?;
        }
        Command::SweepBeta { common } => {
            let spec = load(&common)?;
            emit(&experiment::sweep_beta(&spec)?, &common, &spec)?;
        }
        Command::FindRc {
            common,
            lo,
            hi,
            resolution,
            per_realization,
        } => {
            let spec = load(&common)?;
            emit(
                &experiment::find_rc_table(&spec, lo, hi, resolution, per_realization)?,
                &common,
                &spec,
            )?;
        }
        Command::FindBetac {
            common,
            lo,
            hi,
            tolerance,
            per_realization,
        } => {
            let spec = load(&common)?;
            emit(
                &experiment::find_betac_table(&spec, lo, hi, tolerance, per_realization)?,
                &common,
                &spec,
            )?;
        }
        Command::Theory { common, avg_t } => {
            let spec = load(&common)?;
            emit(&experiment::theory_table(&spec, avg_t)?, &common, &spec)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
