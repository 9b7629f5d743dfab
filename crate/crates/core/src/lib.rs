//! Greedy packet routing among mobile agents on a periodic square, with
//! the congestion transition and a traffic-driven SIS epidemic on top.
//!
//! Agents perform random-direction motion; every step `R` packets are
//! created between random agent pairs and each agent forwards up to `C`
//! queued packets, either straight to a destination in range or to the
//! neighbor nearest that destination.

pub mod config;
pub mod epidemic;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod metrics;
pub mod rng;
pub mod routing;
pub mod simulation;
pub mod spatial;
pub mod theory;
pub mod traffic;

/// Index of an agent, `0..n_agents`.
pub type AgentId = u32;

pub use config::{parse_config, Capacity, ExperimentSpec, Metric, Policy, QueueDiscipline, SweepAxis, WorldConfig};
pub use error::{Error, Result};
pub use simulation::{run_realization, RunOptions, RunSummary};
pub use traffic::World;
