//! Sweep orchestration and CSV output.
//!
//! Every table embeds the master seed and the per-row realization seeds so
//! any single point can be re-run exactly. Realization `k` of an ensemble
//! uses seed `master_seed + k`. Rows are produced in sweep order whatever
//! order the worker pool finishes them in.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::config::{Capacity, ExperimentSpec, SweepAxis, WorldConfig};
use crate::epidemic::{find_beta_c, find_beta_c_each, BetaSearch};
use crate::error::{Error, Result};
use crate::metrics::{find_rc, find_rc_each, RcSearch};
use crate::rng::realization_seed;
use crate::simulation::{mean_se, run_realization, RunOptions, RunSummary};
use crate::theory::{beta_c_congested, beta_c_free, rho_steady_mf};

pub const RUN_HEADER: &[&str] = &["t", "Np", "deliveries", "rho"];
pub const SWEEP_RC_HEADER: &[&str] = &[
    "axis_value",
    "eta_mean",
    "eta_se",
    "rc_flag",
    "avg_t_mean",
    "avg_t_se",
    "master_seed",
    "seeds",
];
pub const SWEEP_BETA_HEADER: &[&str] = &["beta", "rho_mean", "rho_se", "rho_mf", "avg_t", "master_seed", "seeds"];
pub const FIND_RC_HEADER: &[&str] = &["axis", "axis_value", "rc", "rc_mean", "rc_se", "master_seed", "seeds"];
pub const FIND_BETAC_HEADER: &[&str] = &[
    "axis",
    "axis_value",
    "beta_c",
    "beta_c_mean",
    "beta_c_se",
    "avg_t",
    "beta_c_theory",
    "master_seed",
    "seeds",
];
pub const THEORY_HEADER: &[&str] = &[
    "n_agents",
    "gen_rate",
    "avg_t",
    "capacity",
    "beta_c_free",
    "beta_c_congested",
    "beta",
    "rho_mf",
];
pub const LOADS_HEADER: &[&str] = &["bin_lo", "bin_hi", "p"];

/// An in-memory CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn seeds_field(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn seeds_for(master: u64, realizations: usize) -> Vec<u64> {
    (0..realizations).map(|i| realization_seed(master, i)).collect()
}

/// Run every (sweep value, realization) pair in the worker pool.
fn run_grid(configs: &[WorldConfig], spec: &ExperimentSpec, opts: RunOptions) -> Result<Vec<Vec<RunSummary>>> {
    let seeds = seeds_for(spec.base.rng_seed, spec.realizations);
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(c, s)| run_realization(&configs[c], spec.policy, s, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut grouped: Vec<Vec<RunSummary>> = (0..configs.len()).map(|_| Vec::new()).collect();
    for ((c, _), r) in jobs.into_iter().zip(results) {
        grouped[c].push(r);
    }
    Ok(grouped)
}

/// Per-step trace of one realization: `t, Np, deliveries, rho`.
pub fn run_table(summary: &RunSummary) -> Table {
    let mut table = Table::new(RUN_HEADER);
    for r in &summary.records {
        table.push(vec![
            r.t.to_string(),
            r.packets.to_string(),
            r.deliveries.to_string(),
            r.rho.to_string(),
        ]);
    }
    table
}

/// Load distribution P(n) of one realization.
pub fn loads_table(summary: &RunSummary) -> Table {
    let mut table = Table::new(LOADS_HEADER);
    for b in &summary.loads.histogram {
        table.push(vec![b.lo.to_string(), b.hi.to_string(), b.p.to_string()]);
    }
    table
}

/// η and ⟨T⟩ over the sweep axis (R, v or r), ensemble mean ± standard
/// error per value. `rc_flag` marks the last free-flow row before the
/// first congested one.
pub fn sweep_rc(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let (axis, values) = spec.sweep()?;
    if axis == SweepAxis::Beta {
        return Err(Error::invalid("sweep_axis", "sweep-rc varies R, v or r"));
    }
    let mut base = spec.base.clone();
    base.epidemic = false;
    let configs: Vec<WorldConfig> = values.iter().map(|&v| axis.apply(&base, v)).collect();
    let grid = run_grid(&configs, spec, RunOptions::default())?;
    let seeds = seeds_field(&seeds_for(spec.base.rng_seed, spec.realizations));
    let mut rows = Vec::new();
    for (value, runs) in values.iter().zip(&grid) {
        let etas: Vec<f64> = runs.iter().map(|r| r.eta.unwrap_or(f64::NAN)).collect();
        let times: Vec<f64> = runs.iter().filter_map(|r| r.avg_travel_time).collect();
        let (eta_mean, eta_se) = mean_se(&etas);
        let (t_mean, t_se) = mean_se(&times);
        rows.push((*value, eta_mean, eta_se, t_mean, t_se));
    }
    let first_congested = rows.iter().position(|r| r.1 >= spec.eps_eta);
    let flagged = match first_congested {
        Some(0) => None,
        Some(k) => Some(k - 1),
        None => None,
    };
    let mut table = Table::new(SWEEP_RC_HEADER);
    for (k, (value, eta_mean, eta_se, t_mean, t_se)) in rows.into_iter().enumerate() {
        table.push(vec![
            value.to_string(),
            eta_mean.to_string(),
            eta_se.to_string(),
            u8::from(flagged == Some(k)).to_string(),
            t_mean.to_string(),
            t_se.to_string(),
            spec.base.rng_seed.to_string(),
            seeds.clone(),
        ]);
    }
    Ok(table)
}

/// Mean travel time of the traffic alone, averaged over an ensemble.
pub fn ensemble_travel_time(config: &WorldConfig, spec: &ExperimentSpec) -> Result<f64> {
    let mut cfg = config.clone();
    cfg.epidemic = false;
    let runs = run_grid(std::slice::from_ref(&cfg), spec, RunOptions::default())?;
    let times: Vec<f64> = runs[0].iter().filter_map(|r| r.avg_travel_time).collect();
    if times.is_empty() {
        return Err(Error::NoDeliveries);
    }
    Ok(mean_se(&times).0)
}

/// Steady infected density against β.
pub fn sweep_beta(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let (axis, values) = spec.sweep()?;
    if axis != SweepAxis::Beta {
        return Err(Error::invalid("sweep_axis", "sweep-beta varies beta"));
    }
    let mut base = spec.base.clone();
    base.epidemic = true;
    let avg_t = ensemble_travel_time(&base, spec)?;
    let beta_c = beta_c_free(base.n_agents, base.gen_rate, avg_t)?;
    let configs: Vec<WorldConfig> = values.iter().map(|&v| axis.apply(&base, v)).collect();
    let grid = run_grid(
        &configs,
        spec,
        RunOptions {
            stop_on_extinction: true,
        },
    )?;
    let seeds = seeds_field(&seeds_for(spec.base.rng_seed, spec.realizations));
    let mut table = Table::new(SWEEP_BETA_HEADER);
    for (value, runs) in values.iter().zip(&grid) {
        let rhos: Vec<f64> = runs.iter().map(|r| r.rho_steady.unwrap_or(0.0)).collect();
        let (m, se) = mean_se(&rhos);
        table.push(vec![
            value.to_string(),
            m.to_string(),
            se.to_string(),
            opt(rho_steady_mf(*value, beta_c).ok()),
            avg_t.to_string(),
            spec.base.rng_seed.to_string(),
            seeds.clone(),
        ]);
    }
    Ok(table)
}

/// Points at which a search is repeated: every sweep value, or the base
/// configuration alone.
fn search_points(spec: &ExperimentSpec) -> Vec<(String, String, WorldConfig)> {
    match spec.sweep_axis {
        Some(axis) => spec
            .sweep_values
            .iter()
            .map(|&v| (axis.name().to_string(), v.to_string(), axis.apply(&spec.base, v)))
            .collect(),
        None => vec![(String::new(), String::new(), spec.base.clone())],
    }
}

/// Critical generation rate by bisection on `[r_lo, r_hi]` at every sweep
/// point. With `per_realization`, each realization is also bisected on
/// its own to give a mean and standard error.
pub fn find_rc_table(
    spec: &ExperimentSpec,
    r_lo: u32,
    r_hi: u32,
    resolution: u32,
    per_realization: bool,
) -> Result<Table> {
    spec.validate()?;
    if spec.sweep_axis == Some(SweepAxis::GenRate) || spec.sweep_axis == Some(SweepAxis::Beta) {
        return Err(Error::invalid("sweep_axis", "find-rc sweeps v or r"));
    }
    let search = RcSearch {
        r_lo,
        r_hi,
        eps_eta: spec.eps_eta,
        realizations: spec.realizations,
        master_seed: spec.base.rng_seed,
        resolution,
    };
    let seeds = seeds_field(&seeds_for(spec.base.rng_seed, spec.realizations));
    let mut table = Table::new(FIND_RC_HEADER);
    for (axis, value, cfg) in search_points(spec) {
        let est = find_rc(&cfg, spec.policy, &search)?;
        let (mean, se) = if per_realization {
            let each: Vec<f64> = find_rc_each(&cfg, spec.policy, &search)?
                .into_iter()
                .map(f64::from)
                .collect();
            let (m, s) = mean_se(&each);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        table.push(vec![
            axis,
            value,
            est.rc.to_string(),
            opt(mean),
            opt(se),
            spec.base.rng_seed.to_string(),
            seeds.clone(),
        ]);
    }
    Ok(table)
}

/// Epidemic threshold by bisection on `[beta_lo, beta_hi]` at every sweep
/// point, next to the mean-field value from the measured ⟨T⟩.
pub fn find_betac_table(
    spec: &ExperimentSpec,
    beta_lo: f64,
    beta_hi: f64,
    tolerance: f64,
    per_realization: bool,
) -> Result<Table> {
    spec.validate()?;
    if spec.sweep_axis == Some(SweepAxis::Beta) {
        return Err(Error::invalid("sweep_axis", "find-betac sweeps R, v or r"));
    }
    let search = BetaSearch {
        beta_lo,
        beta_hi,
        eps_rho: spec.eps_rho(),
        tolerance,
        realizations: spec.realizations,
        master_seed: spec.base.rng_seed,
    };
    let seeds = seeds_field(&seeds_for(spec.base.rng_seed, spec.realizations));
    let mut table = Table::new(FIND_BETAC_HEADER);
    for (axis, value, mut cfg) in search_points(spec) {
        cfg.epidemic = true;
        let avg_t = ensemble_travel_time(&cfg, spec)?;
        let theory = match cfg.capacity {
            Capacity::Infinite => beta_c_free(cfg.n_agents, cfg.gen_rate, avg_t)?,
            Capacity::Finite(_) => beta_c_free(cfg.n_agents, cfg.gen_rate, avg_t)?.max(beta_c_congested(cfg.capacity)?),
        };
        let est = find_beta_c(&cfg, spec.policy, &search)?;
        let (mean, se) = if per_realization {
            let (m, s) = mean_se(&find_beta_c_each(&cfg, spec.policy, &search)?);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        table.push(vec![
            axis,
            value,
            est.beta_c.to_string(),
            opt(mean),
            opt(se),
            avg_t.to_string(),
            theory.to_string(),
            spec.base.rng_seed.to_string(),
            seeds.clone(),
        ]);
    }
    Ok(table)
}

/// Mean-field thresholds for the base configuration and a measured ⟨T⟩,
/// one row per sweep value (R or β) or a single row.
pub fn theory_table(spec: &ExperimentSpec, avg_t: f64) -> Result<Table> {
    spec.validate()?;
    let points: Vec<WorldConfig> = match spec.sweep_axis {
        None => vec![spec.base.clone()],
        Some(axis @ (SweepAxis::GenRate | SweepAxis::Beta)) => {
            spec.sweep_values.iter().map(|&v| axis.apply(&spec.base, v)).collect()
        }
        Some(_) => return Err(Error::invalid("sweep_axis", "theory sweeps R or beta")),
    };
    let mut table = Table::new(THEORY_HEADER);
    for cfg in points {
        let free = beta_c_free(cfg.n_agents, cfg.gen_rate, avg_t)?;
        let congested = beta_c_congested(cfg.capacity).ok();
        table.push(vec![
            cfg.n_agents.to_string(),
            cfg.gen_rate.to_string(),
            avg_t.to_string(),
            cfg.capacity.to_string(),
            free.to_string(),
            opt(congested),
            cfg.spread_rate.to_string(),
            opt(rho_steady_mf(cfg.spread_rate, free).ok()),
        ]);
    }
    Ok(table)
}

/// Human-readable one-realization summary.
pub fn describe_run(summary: &RunSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seed {}", summary.seed);
    let _ = writeln!(s, "eta {}", opt(summary.eta));
    let _ = writeln!(s, "avg_travel_time {}", opt(summary.avg_travel_time));
    let _ = writeln!(s, "mean_load {}", summary.loads.mean());
    if let Some(rho) = summary.rho_steady {
        let _ = writeln!(s, "rho_steady {rho}");
    }
    s
}
