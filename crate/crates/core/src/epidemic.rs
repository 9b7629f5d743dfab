//! Traffic-driven SIS dynamics.
//!
//! Contagion rides on packet transfers: every packet received from an
//! agent that was infected when the delivery phase began is an independent
//! chance β of infection. All agents infected at the start of an update
//! recover with probability μ and may be re-infected in the same update.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{Policy, WorldConfig};
use crate::error::{Error, Result};
use crate::rng::realization_seed;
use crate::simulation::{run_realization, RunOptions};
use crate::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Health {
    #[default]
    Susceptible,
    Infected,
}

impl Health {
    pub fn is_infected(self) -> bool {
        self == Health::Infected
    }
}

/// One packet hand-off seen by the epidemic: who received it and whether
/// the sender was infected when the delivery phase started.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Receipt {
    pub receiver: AgentId,
    pub sender_infected: bool,
}

/// Reusable buffers for [`epidemic_update`].
#[derive(Debug, Default)]
pub struct Scratch {
    exposed: Vec<bool>,
}

/// Infect exactly round(ρ₀·N) distinct agents, chosen uniformly.
pub fn seed_infection<R: Rng + ?Sized>(health: &mut [Health], rho0: f64, rng: &mut R) -> Result<usize> {
    let n = health.len();
    let count = (rho0 * n as f64).round() as usize;
    if count < 1 {
        return Err(Error::EmptySeed { rho0, n });
    }
    for i in sample(rng, n, count.min(n)) {
        health[i] = Health::Infected;
    }
    Ok(count)
}

/// Parallel SIS update from this step's receipts. Returns the number of
/// agents newly infected.
pub fn epidemic_update<R: Rng + ?Sized>(
    health: &mut [Health],
    receipts: &[Receipt],
    beta: f64,
    mu: f64,
    rng: &mut R,
    scratch: &mut Scratch,
) -> u64 {
    let exposed = &mut scratch.exposed;
    exposed.clear();
    exposed.resize(health.len(), false);
    for r in receipts.iter().filter(|r| r.sender_infected) {
        if rng.gen_bool(beta) {
            exposed[r.receiver as usize] = true;
        }
    }
    let mut infections = 0;
    for (h, &hit) in health.iter_mut().zip(exposed.iter()) {
        let stays = h.is_infected() && !(mu >= 1.0 || rng.gen_bool(mu));
        infections += hit as u64;
        *h = if hit || stays {
            Health::Infected
        } else {
            Health::Susceptible
        };
    }
    infections
}

/// Mean of the final `window` samples.
pub fn steady_rho(rho_series: &[f64], window: usize) -> Result<f64> {
    if window == 0 || window > rho_series.len() {
        return Err(Error::WindowTooShort {
            len: rho_series.len(),
            needed: window,
        });
    }
    let tail = &rho_series[rho_series.len() - window..];
    Ok(tail.iter().sum::<f64>() / window as f64)
}

/// Infected-density observables of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicMetrics {
    pub rho_series: Vec<f64>,
    pub rho_steady: f64,
    pub beta: f64,
    pub seeded_step: u64,
}

/// Bisection protocol for the epidemic threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSearch {
    pub beta_lo: f64,
    pub beta_hi: f64,
    /// Endemic threshold on the ensemble-mean steady density.
    pub eps_rho: f64,
    /// Stop once the bracket is narrower than this.
    pub tolerance: f64,
    pub realizations: usize,
    pub master_seed: u64,
}

impl BetaSearch {
    /// Bracket `[lo, hi]` with the default ε_ρ = 5/N and 10 realizations.
    pub fn new(config: &WorldConfig, beta_lo: f64, beta_hi: f64, master_seed: u64) -> Self {
        Self {
            beta_lo,
            beta_hi,
            eps_rho: 5.0 / config.n_agents as f64,
            tolerance: 1e-3,
            realizations: 10,
            master_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaCEstimate {
    pub beta_c: f64,
    /// `(β, ensemble-mean steady ρ)` for every evaluation, in order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Ensemble-mean steady infected density at spreading rate `beta`.
pub fn ensemble_rho(config: &WorldConfig, policy: Policy, beta: f64, seeds: &[u64]) -> Result<f64> {
    let mut cfg = config.clone();
    cfg.spread_rate = beta;
    cfg.epidemic = true;
    let opts = RunOptions {
        stop_on_extinction: true,
    };
    let rhos = seeds
        .par_iter()
        .map(|&s| run_realization(&cfg, policy, s, opts).map(|r| r.rho_steady.unwrap_or(0.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(rhos.iter().sum::<f64>() / rhos.len() as f64)
}

/// Smallest β whose ensemble-mean steady density exceeds `eps_rho`, by
/// bisection on `[beta_lo, beta_hi]`.
pub fn find_beta_c(config: &WorldConfig, policy: Policy, search: &BetaSearch) -> Result<BetaCEstimate> {
    if search.realizations == 0 {
        return Err(Error::invalid("realizations", "must be at least 1"));
    }
    let seeds: Vec<u64> = (0..search.realizations)
        .map(|i| realization_seed(search.master_seed, i))
        .collect();
    bisect_beta(config, policy, search, &seeds)
}

/// Threshold of each realization on its own (bisection with a single
/// seed), for ensemble mean and standard error.
pub fn find_beta_c_each(config: &WorldConfig, policy: Policy, search: &BetaSearch) -> Result<Vec<f64>> {
    (0..search.realizations)
        .map(|i| {
            let seed = realization_seed(search.master_seed, i);
            bisect_beta(config, policy, search, &[seed]).map(|e| e.beta_c)
        })
        .collect()
}

fn bisect_beta(config: &WorldConfig, policy: Policy, search: &BetaSearch, seeds: &[u64]) -> Result<BetaCEstimate> {
    let (mut lo, mut hi) = (search.beta_lo, search.beta_hi);
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(Error::InvalidBracket(format!(
            "need 0 <= beta_lo < beta_hi <= 1, got [{lo}, {hi}]"
        )));
    }
    let mut evaluations = Vec::new();
    let mut eval = |beta: f64| -> Result<f64> {
        let rho = ensemble_rho(config, policy, beta, seeds)?;
        evaluations.push((beta, rho));
        Ok(rho)
    };
    let rho_lo = eval(lo)?;
    if rho_lo > search.eps_rho {
        return Err(Error::InvalidBracket(format!(
            "epidemic endemic at beta_lo = {lo} (rho = {rho_lo})"
        )));
    }
    let rho_hi = eval(hi)?;
    if rho_hi <= search.eps_rho {
        return Err(Error::InvalidBracket(format!(
            "epidemic extinct at beta_hi = {hi} (rho = {rho_hi})"
        )));
    }
    while hi - lo > search.tolerance {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? > search.eps_rho {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(BetaCEstimate {
        beta_c: hi,
        evaluations,
    })
}
