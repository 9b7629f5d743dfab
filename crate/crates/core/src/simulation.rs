//! Whole-realization driver: runs the step loop over the transient and
//! measurement windows and reduces the step stream to observables.

use crate::config::{Policy, WorldConfig};
use crate::epidemic::steady_rho;
use crate::error::Result;
use crate::metrics::{load_stats, order_parameter, LoadStats, TravelTimes};
use crate::traffic::{StepRecord, World};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// End the run as soon as the epidemic has died out. ρ = 0 is
    /// absorbing, so the remaining density samples are filled with zeros;
    /// traffic observables then cover only the simulated prefix.
    pub stop_on_extinction: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub records: Vec<StepRecord>,
    /// Order parameter over the measurement window, when long enough.
    pub eta: Option<f64>,
    /// Mean travel time of packets delivered in the measurement window.
    pub avg_travel_time: Option<f64>,
    pub loads: LoadStats,
    pub rho_series: Vec<f64>,
    pub rho_steady: Option<f64>,
    pub seeded_step: Option<u64>,
    /// Step after which the run was cut short by extinction.
    pub extinct_at: Option<u64>,
}

impl RunSummary {
    pub fn np_series(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.packets).collect()
    }
}

/// Simulate one realization of `config` under `policy` with `seed`.
pub fn run_realization(config: &WorldConfig, policy: Policy, seed: u64, opts: RunOptions) -> Result<RunSummary> {
    config.validate()?;
    let total = config.total_steps();
    let transient = config.transient_steps;
    let mut world = World::new(config.clone(), policy, seed);
    let mut records = Vec::with_capacity(total as usize);
    let mut queue_sums = vec![0u64; config.n_agents];
    let mut travel = TravelTimes::default();
    let mut extinct_at = None;
    for _ in 0..total {
        let rec = world.step();
        if rec.t >= transient {
            for (sum, len) in queue_sums.iter_mut().zip(world.queue_lengths()) {
                *sum += len as u64;
            }
            travel.add(rec.travel_time_sum, rec.deliveries);
        }
        records.push(rec);
        if opts.stop_on_extinction && world.seeded_step().is_some() && rec.infected == 0 {
            extinct_at = Some(rec.t);
            break;
        }
    }
    let np: Vec<u64> = records.iter().map(|r| r.packets).collect();
    let eta = order_parameter(&np, transient as usize, config.capacity, config.gen_rate).ok();
    let measured = records.len() as u64 - transient.min(records.len() as u64);
    let loads = load_stats(&queue_sums, measured.max(1));
    let mut rho_series: Vec<f64> = records.iter().map(|r| r.rho).collect();
    rho_series.resize(total as usize, 0.0);
    let rho_steady = if config.epidemic {
        Some(steady_rho(&rho_series, config.rho_window() as usize)?)
    } else {
        None
    };
    Ok(RunSummary {
        seed,
        records,
        eta,
        avg_travel_time: travel.mean().ok(),
        loads,
        rho_series,
        rho_steady,
        seeded_step: world.seeded_step(),
        extinct_at,
    })
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Capacity;

    fn small() -> WorldConfig {
        WorldConfig {
            n_agents: 300,
            side_length: 5.0,
            gen_rate: 20,
            transient_steps: 50,
            measure_steps: 200,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_se(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn load_identity_holds() {
        let cfg = small();
        let run = run_realization(&cfg, Policy::Greedy, 4, RunOptions::default()).unwrap();
        let window_np: u64 = run.records[cfg.transient_steps as usize..]
            .iter()
            .map(|r| r.packets)
            .sum();
        let load_total: f64 = run.loads.loads.iter().sum::<f64>() * cfg.measure_steps as f64;
        assert!((load_total - window_np as f64).abs() < 1e-6 * window_np.max(1) as f64);
    }

    #[test]
    fn epidemic_does_not_perturb_traffic() {
        let cfg = small();
        let plain = run_realization(&cfg, Policy::Greedy, 9, RunOptions::default()).unwrap();
        let mut epi = cfg.clone();
        epi.epidemic = true;
        epi.spread_rate = 0.4;
        epi.capacity = Capacity::Finite(1);
        let with = run_realization(&epi, Policy::Greedy, 9, RunOptions::default()).unwrap();
        assert_eq!(plain.np_series(), with.np_series());
        assert_eq!(plain.seeded_step, None);
        assert_eq!(with.seeded_step, Some(cfg.transient_steps));
    }

    #[test]
    fn extinction_shortcut_matches_full_run() {
        let mut cfg = small();
        cfg.epidemic = true;
        cfg.spread_rate = 0.01;
        let full = run_realization(&cfg, Policy::Greedy, 2, RunOptions::default()).unwrap();
        let short = run_realization(
            &cfg,
            Policy::Greedy,
            2,
            RunOptions {
                stop_on_extinction: true,
            },
        )
        .unwrap();
        assert!(short.extinct_at.is_some());
        assert_eq!(full.rho_series, short.rho_series);
        assert_eq!(full.rho_steady, short.rho_steady);
    }
}
