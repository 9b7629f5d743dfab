//! Model parameters and the plain-text `key = value` configuration format.
//!
//! Lines hold one `key = value` pair; `#` starts a comment. Unknown keys are
//! rejected and every validation error names the offending key. An empty
//! file yields the default configuration (N = 1500, L = 10, C = 1, windows
//! of 5000 transient and 50000 measured steps).

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Per-agent delivering ability per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capacity {
    Finite(u32),
    Infinite,
}

impl Capacity {
    /// Send budget for one step; `usize::MAX` when unbounded.
    pub fn budget(self) -> usize {
        match self {
            Capacity::Finite(c) => c as usize,
            Capacity::Infinite => usize::MAX,
        }
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            Capacity::Finite(c) => Some(c),
            Capacity::Infinite => None,
        }
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capacity::Finite(c) => write!(f, "{c}"),
            Capacity::Infinite => f.write_str("inf"),
        }
    }
}

/// Distance used for neighbor detection and the greedy target metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// Minimum-image distance on the periodic square.
    #[default]
    Torus,
    /// Plain Euclidean distance between the reduced coordinates.
    Euclidean,
}

/// What an agent does when the packet at its queue head cannot move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueueDiscipline {
    /// Head-of-line blocking: the agent stops sending for this step.
    #[default]
    Strict,
    /// Leave the stuck packet in place and try the next eligible one.
    SkipStuck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Policy {
    #[default]
    Greedy,
    Random,
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Policy::Greedy),
            "random" => Ok(Policy::Random),
            other => Err(Error::invalid(
                "policy",
                format!("expected greedy|random, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Greedy => "greedy",
            Policy::Random => "random",
        })
    }
}

/// All parameters of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub n_agents: usize,
    pub side_length: f64,
    pub speed: f64,
    pub radius: f64,
    pub capacity: Capacity,
    pub gen_rate: u32,
    pub spread_rate: f64,
    pub recovery_rate: f64,
    pub initial_infected_fraction: f64,
    pub rng_seed: u64,
    pub transient_steps: u64,
    pub measure_steps: u64,
    /// Run the SIS dynamics on top of the traffic.
    pub epidemic: bool,
    /// Trailing window for the steady infected density; half the
    /// measurement window when unset.
    pub rho_window: Option<u64>,
    pub metric: Metric,
    pub queue: QueueDiscipline,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_agents: 1500,
            side_length: 10.0,
            speed: 0.1,
            radius: 1.0,
            capacity: Capacity::Finite(1),
            gen_rate: 100,
            spread_rate: 0.0,
            recovery_rate: 1.0,
            initial_infected_fraction: 0.1,
            rng_seed: 1,
            transient_steps: 5_000,
            measure_steps: 50_000,
            epidemic: false,
            rho_window: None,
            metric: Metric::Torus,
            queue: QueueDiscipline::Strict,
        }
    }
}

impl WorldConfig {
    pub fn total_steps(&self) -> u64 {
        self.transient_steps + self.measure_steps
    }

    pub fn rho_window(&self) -> u64 {
        self.rho_window.unwrap_or((self.measure_steps / 2).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::invalid("n_agents", "need at least two agents"));
        }
        if !(self.side_length.is_finite() && self.side_length > 0.0) {
            return Err(Error::invalid("side_length", "must be a positive real"));
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(Error::invalid("speed", "must be non-negative"));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::invalid("radius", "must be positive"));
        }
        if self.radius >= self.side_length / 2.0 {
            return Err(Error::invalid("radius", "must be smaller than side_length / 2"));
        }
        if self.capacity == Capacity::Finite(0) {
            return Err(Error::invalid("capacity", "must be at least 1 or `inf`"));
        }
        if self.gen_rate == 0 {
            return Err(Error::invalid("gen_rate", "must be at least 1"));
        }
        for (key, p) in [
            ("spread_rate", self.spread_rate),
            ("recovery_rate", self.recovery_rate),
            ("initial_infected_fraction", self.initial_infected_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(key, "must be a probability in [0, 1]"));
            }
        }
        if self.transient_steps == 0 {
            return Err(Error::invalid("transient_steps", "must be positive"));
        }
        if self.measure_steps == 0 {
            return Err(Error::invalid("measure_steps", "must be positive"));
        }
        if let Some(w) = self.rho_window {
            if w == 0 || w > self.measure_steps {
                return Err(Error::invalid("rho_window", "must lie in 1..=measure_steps"));
            }
        }
        Ok(())
    }
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    GenRate,
    Speed,
    Radius,
    Beta,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::GenRate => "R",
            SweepAxis::Speed => "v",
            SweepAxis::Radius => "r",
            SweepAxis::Beta => "beta",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply(self, base: &WorldConfig, value: f64) -> WorldConfig {
        let mut cfg = base.clone();
        match self {
            SweepAxis::GenRate => cfg.gen_rate = value.round() as u32,
            SweepAxis::Speed => cfg.speed = value,
            SweepAxis::Radius => cfg.radius = value,
            SweepAxis::Beta => cfg.spread_rate = value,
        }
        cfg
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" | "gen_rate" => Ok(SweepAxis::GenRate),
            "v" | "speed" => Ok(SweepAxis::Speed),
            "r" | "radius" => Ok(SweepAxis::Radius),
            "beta" | "spread_rate" => Ok(SweepAxis::Beta),
            other => Err(Error::invalid(
                "sweep_axis",
                format!("expected R|v|r|beta, got `{other}`"),
            )),
        }
    }
}

/// A world configuration plus the ensemble/sweep protocol around it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: WorldConfig,
    pub sweep_axis: Option<SweepAxis>,
    pub sweep_values: Vec<f64>,
    pub realizations: usize,
    pub policy: Policy,
    pub output_path: Option<PathBuf>,
    /// Free-flow threshold on the order parameter.
    pub eps_eta: f64,
    /// Endemic threshold on the steady infected density; 5/N when unset.
    pub eps_rho: Option<f64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            base: WorldConfig::default(),
            sweep_axis: None,
            sweep_values: Vec::new(),
            realizations: 5,
            policy: Policy::Greedy,
            output_path: None,
            eps_eta: 0.01,
            eps_rho: None,
        }
    }
}

impl ExperimentSpec {
    pub fn eps_rho(&self) -> f64 {
        self.eps_rho.unwrap_or(5.0 / self.base.n_agents as f64)
    }

    /// Sweep axis and values, or an error naming the missing key.
    pub fn sweep(&self) -> Result<(SweepAxis, &[f64])> {
        let axis = self.sweep_axis.ok_or_else(|| Error::MissingKey("sweep_axis".into()))?;
        if self.sweep_values.is_empty() {
            return Err(Error::MissingKey("sweep_values".into()));
        }
        Ok((axis, &self.sweep_values))
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.realizations == 0 {
            return Err(Error::invalid("realizations", "must be at least 1"));
        }
        if self.sweep_axis.is_some() && self.sweep_values.is_empty() {
            return Err(Error::MissingKey("sweep_values".into()));
        }
        if !self.sweep_values.is_empty() && self.sweep_axis.is_none() {
            return Err(Error::MissingKey("sweep_axis".into()));
        }
        if self.sweep_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sweep_values", "must be strictly increasing"));
        }
        if let Some(axis) = self.sweep_axis {
            for &v in &self.sweep_values {
                axis.apply(&self.base, v).validate().map_err(|e| match e {
                    Error::InvalidValue { reason, .. } => Error::invalid("sweep_values", format!("{v}: {reason}")),
                    other => other,
                })?;
                if axis == SweepAxis::GenRate && v.fract() != 0.0 {
                    return Err(Error::invalid("sweep_values", format!("{v}: R must be an integer")));
                }
            }
        }
        if self.eps_eta.is_nan() || self.eps_eta <= 0.0 {
            return Err(Error::invalid("eps_eta", "must be positive"));
        }
        if let Some(e) = self.eps_rho {
            if !(0.0..1.0).contains(&e) {
                return Err(Error::invalid("eps_rho", "must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::invalid(key, format!("expected a boolean, got `{value}`"))),
    }
}

/// Parse a configuration text into a validated experiment spec.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Syntax {
            line: lineno + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let w = &mut spec.base;
        match key {
            "n_agents" => w.n_agents = parse_num(key, value)?,
            "side_length" => w.side_length = parse_num(key, value)?,
            "speed" => w.speed = parse_num(key, value)?,
            "radius" => w.radius = parse_num(key, value)?,
            "capacity" => {
                w.capacity = match value {
                    "inf" | "infinite" => Capacity::Infinite,
                    v => Capacity::Finite(parse_num(key, v)?),
                }
            }
            "gen_rate" => w.gen_rate = parse_num(key, value)?,
            "spread_rate" => w.spread_rate = parse_num(key, value)?,
            "recovery_rate" => w.recovery_rate = parse_num(key, value)?,
            "initial_infected_fraction" => w.initial_infected_fraction = parse_num(key, value)?,
            "rng_seed" => w.rng_seed = parse_num(key, value)?,
            "transient_steps" => w.transient_steps = parse_num(key, value)?,
            "measure_steps" => w.measure_steps = parse_num(key, value)?,
            "epidemic" => w.epidemic = parse_bool(key, value)?,
            "rho_window" => w.rho_window = Some(parse_num(key, value)?),
            "distance" => {
                w.metric = match value {
                    "torus" => Metric::Torus,
                    "euclidean" => Metric::Euclidean,
                    _ => return Err(Error::invalid(key, "expected torus|euclidean")),
                }
            }
            "queue" => {
                w.queue = match value {
                    "strict" => QueueDiscipline::Strict,
                    "skip_stuck" => QueueDiscipline::SkipStuck,
                    _ => return Err(Error::invalid(key, "expected strict|skip_stuck")),
                }
            }
            "policy" => spec.policy = value.parse()?,
            "sweep_axis" => spec.sweep_axis = Some(value.parse()?),
            "sweep_values" => {
                spec.sweep_values = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num(key, s))
                    .collect::<Result<_>>()?
            }
            "realizations" => spec.realizations = parse_num(key, value)?,
            "output_path" => spec.output_path = Some(PathBuf::from(value)),
            "eps_eta" => spec.eps_eta = parse_num(key, value)?,
            "eps_rho" => spec.eps_rho = Some(parse_num(key, value)?),
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
    }
    spec.validate()?;
    Ok(spec)
}
