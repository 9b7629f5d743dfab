//! Traffic observables: the order parameter, critical generation rate,
//! average travel time and per-agent load distribution.

use rayon::prelude::*;

use crate::config::{Capacity, Policy, WorldConfig};
use crate::error::{Error, Result};
use crate::rng::realization_seed;
use crate::simulation::{run_realization, RunOptions};
use crate::traffic::Delivery;

/// Ordinary least-squares line through `(t, y_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
}

/// Fit `series[t]` against `t` over `t >= transient`.
pub fn growth_fit(series: &[u64], transient: usize) -> Result<LinearFit> {
    if series.len() <= transient + 2 {
        return Err(Error::WindowTooShort {
            len: series.len(),
            needed: transient + 2,
        });
    }
    let window = &series[transient..];
    let n = window.len() as f64;
    let t_mean = transient as f64 + (n - 1.0) / 2.0;
    let y_mean = window.iter().map(|&y| y as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, &y) in window.iter().enumerate() {
        let dt = (transient + k) as f64 - t_mean;
        sxy += dt * (y as f64 - y_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let rss: f64 = window
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let r = y as f64 - intercept - slope * (transient + k) as f64;
            r * r
        })
        .sum();
    let slope_se = (rss / (n - 2.0) / sxx).sqrt();
    Ok(LinearFit {
        intercept,
        slope,
        slope_se,
    })
}

/// η = (C/R)·⟨ΔN_p⟩/Δt with the growth rate taken as the least-squares
/// slope of N_p(t) after the transient. Negative estimates clamp to zero.
/// With unbounded capacity the prefactor C is taken as 1.
pub fn order_parameter(np_series: &[u64], transient: usize, capacity: Capacity, gen_rate: u32) -> Result<f64> {
    let fit = growth_fit(np_series, transient)?;
    let c = capacity.finite().unwrap_or(1) as f64;
    Ok((c / gen_rate as f64 * fit.slope).max(0.0))
}

/// Mean travel time of packets delivered at or after step `transient`.
pub fn avg_travel_time(deliveries: &[Delivery], transient: u64) -> Result<f64> {
    let mut acc = TravelTimes::default();
    for d in deliveries.iter().filter(|d| d.step >= transient) {
        acc.add(d.travel_time, 1);
    }
    acc.mean()
}

/// Running sum of travel times.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TravelTimes {
    pub sum: u64,
    pub count: u64,
}

impl TravelTimes {
    pub fn add(&mut self, travel_time_sum: u64, count: u64) {
        self.sum += travel_time_sum;
        self.count += count;
    }

    pub fn mean(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::NoDeliveries);
        }
        Ok(self.sum as f64 / self.count as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    /// Fraction of agents with load in `[lo, hi)`.
    pub p: f64,
}

/// Unit-width bins below 10, then bins growing by a factor 1.5.
pub fn load_bin_edges(max_load: f64) -> Vec<f64> {
    let mut edges: Vec<f64> = (0..=10).map(f64::from).collect();
    while *edges.last().unwrap() <= max_load {
        let last = *edges.last().unwrap();
        edges.push(last * 1.5);
    }
    edges
}

pub fn load_histogram(loads: &[f64]) -> Vec<Bin> {
    let max = loads.iter().copied().fold(0.0, f64::max);
    let edges = load_bin_edges(max);
    let mut counts = vec![0usize; edges.len() - 1];
    for &n in loads {
        let k = edges.partition_point(|&e| e <= n) - 1;
        counts[k] += 1;
    }
    let total = loads.len().max(1) as f64;
    edges
        .windows(2)
        .zip(counts)
        .map(|(w, c)| Bin {
            lo: w[0],
            hi: w[1],
            p: c as f64 / total,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadStats {
    /// Time-averaged queue length n_i of every agent.
    pub loads: Vec<f64>,
    pub histogram: Vec<Bin>,
}

impl LoadStats {
    pub fn mean(&self) -> f64 {
        self.loads.iter().sum::<f64>() / self.loads.len().max(1) as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.loads.iter().map(|n| (n - m) * (n - m)).sum::<f64>() / self.loads.len().max(1) as f64
    }
}

/// n_i = Σ_t n_i(t) / ΔT from per-agent queue-length sums over a window of
/// `window` steps.
pub fn load_stats(queue_sums: &[u64], window: u64) -> LoadStats {
    let loads: Vec<f64> = queue_sums.iter().map(|&s| s as f64 / window as f64).collect();
    let histogram = load_histogram(&loads);
    LoadStats { loads, histogram }
}

/// Bisection protocol for the critical generation rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcSearch {
    /// Free-flow end of the bracket.
    pub r_lo: u32,
    /// Congested end of the bracket.
    pub r_hi: u32,
    pub eps_eta: f64,
    pub realizations: usize,
    pub master_seed: u64,
    /// Bisection stops once the bracket is this narrow; 1 gives the exact
    /// integer threshold.
    pub resolution: u32,
}

impl RcSearch {
    pub fn new(r_lo: u32, r_hi: u32, master_seed: u64) -> Self {
        Self {
            r_lo,
            r_hi,
            eps_eta: 0.01,
            realizations: 5,
            master_seed,
            resolution: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcEstimate {
    pub rc: u32,
    /// `(R, ensemble-mean η)` for every evaluation, in order.
    pub evaluations: Vec<(u32, f64)>,
}

/// Ensemble-mean order parameter at generation rate `rate`.
pub fn ensemble_eta(config: &WorldConfig, policy: Policy, rate: u32, seeds: &[u64]) -> Result<f64> {
    let mut cfg = config.clone();
    cfg.gen_rate = rate;
    cfg.epidemic = false;
    let etas = seeds
        .par_iter()
        .map(|&s| {
            run_realization(&cfg, policy, s, RunOptions::default()).and_then(|r| {
                r.eta.ok_or(Error::WindowTooShort {
                    len: r.records.len(),
                    needed: 2,
                })
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(etas.iter().sum::<f64>() / etas.len() as f64)
}

/// Largest integer R whose ensemble-mean η stays below `eps_eta`.
pub fn find_rc(config: &WorldConfig, policy: Policy, search: &RcSearch) -> Result<RcEstimate> {
    if search.realizations == 0 {
        return Err(Error::invalid("realizations", "must be at least 1"));
    }
    let seeds: Vec<u64> = (0..search.realizations)
        .map(|i| realization_seed(search.master_seed, i))
        .collect();
    bisect_rate(config, policy, search, &seeds)
}

/// Critical rate of each realization on its own.
pub fn find_rc_each(config: &WorldConfig, policy: Policy, search: &RcSearch) -> Result<Vec<u32>> {
    (0..search.realizations)
        .map(|i| {
            let seed = realization_seed(search.master_seed, i);
            bisect_rate(config, policy, search, &[seed]).map(|e| e.rc)
        })
        .collect()
}

fn bisect_rate(config: &WorldConfig, policy: Policy, search: &RcSearch, seeds: &[u64]) -> Result<RcEstimate> {
    let (mut lo, mut hi) = (search.r_lo, search.r_hi);
    if lo == 0 || lo >= hi {
        return Err(Error::InvalidBracket(format!(
            "need 1 <= r_lo < r_hi, got [{lo}, {hi}]"
        )));
    }
    let mut evaluations = Vec::new();
    let mut eval = |rate: u32| -> Result<f64> {
        let eta = ensemble_eta(config, policy, rate, seeds)?;
        evaluations.push((rate, eta));
        Ok(eta)
    };
    let eta_lo = eval(lo)?;
    if eta_lo >= search.eps_eta {
        return Err(Error::InvalidBracket(format!(
            "congested at r_lo = {lo} (eta = {eta_lo})"
        )));
    }
    let eta_hi = eval(hi)?;
    if eta_hi < search.eps_eta {
        return Err(Error::InvalidBracket(format!(
            "free flow at r_hi = {hi} (eta = {eta_hi})"
        )));
    }
    while hi - lo > search.resolution.max(1) {
        let mid = lo + (hi - lo) / 2;
        if eval(mid)? < search.eps_eta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RcEstimate { rc: lo, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use crate::traffic::Packet;
    use rand::Rng;

    #[test]
    fn linear_growth_gives_expected_eta() {
        let series: Vec<u64> = (0..200).map(|t| 50 * t).collect();
        let eta = order_parameter(&series, 20, Capacity::Finite(1), 100).unwrap();
        assert!((eta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flat_series_gives_zero() {
        let series = vec![1234u64; 300];
        assert_eq!(order_parameter(&series, 10, Capacity::Finite(1), 100).unwrap(), 0.0);
    }

    #[test]
    fn decreasing_series_clamps_to_zero() {
        let series: Vec<u64> = (0..100).map(|t| 1000 - t).collect();
        assert_eq!(order_parameter(&series, 0, Capacity::Finite(1), 10).unwrap(), 0.0);
    }

    #[test]
    fn short_window_rejected() {
        let series = vec![0u64; 12];
        assert!(matches!(
            order_parameter(&series, 10, Capacity::Finite(1), 1),
            Err(Error::WindowTooShort { .. })
        ));
    }

    #[test]
    fn slope_recovered_within_standard_error() {
        let mut rng = substream(3, Stream::Generation);
        let mut misses = 0;
        for trial in 0..200 {
            let b = 0.5 + trial as f64 * 0.01;
            let series: Vec<u64> = (0..2000)
                .map(|t| (500.0 + b * t as f64 + rng.gen_range(-40.0..40.0)).round() as u64)
                .collect();
            let fit = growth_fit(&series, 100).unwrap();
            if (fit.slope - b).abs() > 2.0 * fit.slope_se {
                misses += 1;
            }
            let eta = order_parameter(&series, 100, Capacity::Finite(3), 7).unwrap();
            assert!((eta - 3.0 / 7.0 * b).abs() < 3.0 / 7.0 * 4.0 * fit.slope_se);
        }
        // Two-sigma band holds ~95% of the time.
        assert!(misses < 25, "{misses} misses");
    }

    fn delivery(step: u64, travel_time: u64) -> Delivery {
        Delivery {
            packet: Packet {
                id: 0,
                source: 0,
                dest: 1,
                created_step: step - travel_time,
                hops: 0,
                arrived_step: step - travel_time,
                last_sender: None,
                last_sender_infected: false,
            },
            step,
            travel_time,
        }
    }

    #[test]
    fn travel_time_over_window() {
        let d = [delivery(9, 9), delivery(10, 1), delivery(11, 1), delivery(12, 4)];
        assert_eq!(avg_travel_time(&d, 10).unwrap(), 2.0);
        assert!(matches!(avg_travel_time(&d, 20), Err(Error::NoDeliveries)));
    }

    #[test]
    fn idle_agent_has_zero_load() {
        let s = load_stats(&[0, 40, 10], 20);
        assert_eq!(s.loads, vec![0.0, 2.0, 0.5]);
        let total: f64 = s.histogram.iter().map(|b| b.p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bin_edges() {
        let e = load_bin_edges(3.0);
        assert_eq!(e, (0..=10).map(f64::from).collect::<Vec<_>>());
        let e = load_bin_edges(20.0);
        assert_eq!(&e[10..], &[10.0, 15.0, 22.5]);
        let h = load_histogram(&[0.2, 0.7, 9.99, 10.0, 14.9, 15.0]);
        assert_eq!(h[0].p, 2.0 / 6.0);
        assert_eq!(h[9].p, 1.0 / 6.0);
        assert_eq!(h[10].p, 2.0 / 6.0);
        assert_eq!(h[11].p, 1.0 / 6.0);
    }

    #[test]
    fn rc_bracket_validation() {
        let cfg = WorldConfig::default();
        let s = RcSearch::new(10, 10, 0);
        assert!(matches!(
            find_rc(&cfg, Policy::Greedy, &s),
            Err(Error::InvalidBracket(_))
        ));
    }
}
