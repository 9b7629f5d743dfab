//! Mean-field predictions for the traffic-driven epidemic.
//!
//! An agent sends on average R⟨T⟩/N packets per step in free flow, giving
//! dρ/dt = −ρ + (R⟨T⟩/N)·β·ρ(1−ρ) and the threshold β_c = N/(R⟨T⟩). When
//! every agent is saturated it sends exactly C packets, so β_c = 1/C.

use crate::config::Capacity;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldInputs {
    pub n_agents: usize,
    pub gen_rate: u32,
    /// Measured average travel time.
    pub avg_travel_time: f64,
    pub capacity: Capacity,
    pub beta: f64,
}

impl MeanFieldInputs {
    /// Packets sent per agent per step, R⟨T⟩/N.
    pub fn send_rate(&self) -> f64 {
        self.gen_rate as f64 * self.avg_travel_time / self.n_agents as f64
    }

    pub fn beta_c_free(&self) -> Result<f64> {
        beta_c_free(self.n_agents, self.gen_rate, self.avg_travel_time)
    }

    pub fn rho_steady(&self) -> Result<f64> {
        rho_steady_mf(self.beta, self.beta_c_free()?)
    }
}

/// β_c = N / (R⟨T⟩). Values above 1 mean no threshold exists below β = 1.
pub fn beta_c_free(n_agents: usize, gen_rate: u32, avg_travel_time: f64) -> Result<f64> {
    let load = gen_rate as f64 * avg_travel_time;
    if load.is_nan() || load <= 0.0 {
        return Err(Error::Undefined(format!("R·<T> must be positive, got {load}")));
    }
    Ok(n_agents as f64 / load)
}

/// Whether a free-flow threshold lies inside the probability range.
pub fn has_threshold(beta_c: f64) -> bool {
    beta_c <= 1.0
}

/// β_c = 1/C for saturated agents.
pub fn beta_c_congested(capacity: Capacity) -> Result<f64> {
    match capacity {
        Capacity::Finite(0) => Err(Error::invalid("capacity", "must be at least 1")),
        Capacity::Finite(c) => Ok(1.0 / c as f64),
        Capacity::Infinite => Err(Error::Undefined(
            "no saturation limit for unbounded capacity; use beta_c_free".into(),
        )),
    }
}

/// Nontrivial stationary density max(0, 1 − β_c/β).
pub fn rho_steady_mf(beta: f64, beta_c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid("beta", "must be a probability"));
    }
    if beta == 0.0 && beta_c == 0.0 {
        return Err(Error::Undefined("rho for beta = beta_c = 0".into()));
    }
    if beta <= beta_c {
        return Ok(0.0);
    }
    Ok(1.0 - beta_c / beta)
}

/// dρ/dt for send rate `lambda` (packets per agent per step).
pub fn rate_equation(rho: f64, beta: f64, lambda: f64) -> f64 {
    -rho + lambda * beta * rho * (1.0 - rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_flow_threshold() {
        assert!((beta_c_free(1500, 4000, 3.75).unwrap() - 0.1).abs() < 1e-15);
        assert!(beta_c_free(1500, 0, 3.0).is_err());
        assert!(!has_threshold(beta_c_free(1500, 100, 2.0).unwrap()));
    }

    #[test]
    fn threshold_scales_inversely_with_rate() {
        let a = beta_c_free(1500, 1000, 4.0).unwrap();
        let b = beta_c_free(1500, 4000, 4.0).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn congested_threshold() {
        assert_eq!(beta_c_congested(Capacity::Finite(10)).unwrap(), 0.1);
        assert_eq!(beta_c_congested(Capacity::Finite(1)).unwrap(), 1.0);
        assert!(beta_c_congested(Capacity::Infinite).is_err());
    }

    #[test]
    fn stationary_density() {
        assert_eq!(rho_steady_mf(0.1, 0.1).unwrap(), 0.0);
        assert!((rho_steady_mf(0.2, 0.1).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(rho_steady_mf(0.05, 0.1).unwrap(), 0.0);
        assert!(rho_steady_mf(0.0, 0.0).is_err());
    }

    #[test]
    fn identity_beta_c_times_load() {
        for (n, r, t) in [(1500, 4000, 3.7), (100, 7, 12.5), (2000, 1, 1.0)] {
            let bc = beta_c_free(n, r, t).unwrap();
            assert!((bc * r as f64 * t / n as f64 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_of_rate_equation() {
        let inputs = MeanFieldInputs {
            n_agents: 1500,
            gen_rate: 4000,
            avg_travel_time: 3.9,
            capacity: Capacity::Infinite,
            beta: 0.3,
        };
        let lambda = inputs.send_rate();
        let expected = inputs.rho_steady().unwrap();
        let mut rho = 0.1;
        for _ in 0..100_000 {
            rho += 0.1 * rate_equation(rho, inputs.beta, lambda);
        }
        assert!((rho - expected).abs() < 1e-9, "{rho} vs {expected}");
        assert!(rate_equation(expected, inputs.beta, lambda).abs() < 1e-12);
    }
}
