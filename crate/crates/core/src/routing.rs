//! Next-hop selection for a single packet.
//!
//! Both policies deliver directly when the destination is a neighbor of
//! the holder. Otherwise greedy routing hands the packet to the neighbor
//! nearest the destination (ties broken uniformly at random) and random
//! routing hands it to a uniformly chosen neighbor. A holder without
//! neighbors is stuck.

use rand::Rng;

use crate::config::{Metric, Policy};
use crate::geometry::{distance_sq, Position};
use crate::AgentId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoutingDecision {
    /// The destination is in range; the packet leaves the system.
    Deliver,
    /// Hand the packet to neighbor `to`, which sits `distance_after` from
    /// the destination.
    Forward { to: AgentId, distance_after: f64 },
    /// No neighbor to hand the packet to.
    Stuck,
}

impl RoutingDecision {
    pub fn distance_after(&self) -> Option<f64> {
        match self {
            RoutingDecision::Deliver => Some(0.0),
            RoutingDecision::Forward { distance_after, .. } => Some(*distance_after),
            RoutingDecision::Stuck => None,
        }
    }
}

/// Geometry needed to score candidates.
#[derive(Debug, Clone, Copy)]
pub struct Space<'a> {
    pub positions: &'a [Position],
    pub side: f64,
    pub metric: Metric,
}

pub fn route_greedy<R: Rng + ?Sized>(
    holder: AgentId,
    dest: AgentId,
    nbrs: &[AgentId],
    space: Space<'_>,
    rng: &mut R,
) -> RoutingDecision {
    debug_assert_ne!(holder, dest, "self-addressed packet reached routing");
    if nbrs.contains(&dest) {
        return RoutingDecision::Deliver;
    }
    let target = space.positions[dest as usize];
    let score = |k: AgentId| distance_sq(space.positions[k as usize], target, space.side, space.metric);
    match argmin_uniform(nbrs.iter().map(|&k| score(k)), rng) {
        Some((slot, best_d)) => RoutingDecision::Forward {
            to: nbrs[slot],
            distance_after: best_d.sqrt(),
        },
        None => RoutingDecision::Stuck,
    }
}

/// Index and value of the minimum, chosen uniformly among exact ties. The
/// scores are consumed twice only when there is a tie; `rng` is drawn from
/// only in that case.
fn argmin_uniform<I, R>(scores: I, rng: &mut R) -> Option<(usize, f64)>
where
    I: Iterator<Item = f64> + Clone,
    R: Rng + ?Sized,
{
    let mut best = f64::INFINITY;
    let mut first = usize::MAX;
    let mut ties = 0usize;
    for (k, d) in scores.clone().enumerate() {
        if d < best {
            best = d;
            first = k;
            ties = 1;
        } else if d == best {
            ties += 1;
        }
    }
    match ties {
        0 => None,
        1 => Some((first, best)),
        _ => {
            let pick = rng.gen_range(0..ties);
            let slot = scores
                .enumerate()
                .filter(|&(_, d)| d == best)
                .nth(pick)
                .expect("argmin set is non-empty")
                .0;
            Some((slot, best))
        }
    }
}

/// Neighbor set of one holder with coordinates gathered contiguously, so
/// that routing many packets from the same holder scans flat arrays.
/// Decisions and random draws are identical to [`route`].
#[derive(Debug, Default)]
pub struct NeighborFrame {
    ids: Vec<AgentId>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    scores: Vec<f64>,
    mark: Vec<u32>,
    stamp: u32,
}

impl NeighborFrame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(&mut self, nbrs: &[AgentId], positions: &[Position]) {
        if self.mark.len() != positions.len() || self.stamp == u32::MAX {
            self.mark.clear();
            self.mark.resize(positions.len(), 0);
            self.stamp = 0;
        }
        self.stamp += 1;
        self.ids.clear();
        self.xs.clear();
        self.ys.clear();
        self.ids.extend_from_slice(nbrs);
        for &k in nbrs {
            let p = positions[k as usize];
            self.xs.push(p.x);
            self.ys.push(p.y);
            self.mark[k as usize] = self.stamp;
        }
    }

    pub fn ids(&self) -> &[AgentId] {
        &self.ids
    }

    pub fn contains(&self, k: AgentId) -> bool {
        self.mark.get(k as usize) == Some(&self.stamp)
    }

    /// Fill `scores` with squared distances to `target`; same arithmetic
    /// as `distance_sq`, in a form the compiler vectorizes.
    fn score(&mut self, target: Position, side: f64, metric: Metric) {
        self.scores.clear();
        let pairs = self.xs.iter().zip(&self.ys);
        match metric {
            Metric::Torus => self.scores.extend(pairs.map(|(&x, &y)| {
                let dx = (x - target.x).abs();
                let dy = (y - target.y).abs();
                let dx = if side - dx < dx { side - dx } else { dx };
                let dy = if side - dy < dy { side - dy } else { dy };
                dx * dx + dy * dy
            })),
            Metric::Euclidean => self.scores.extend(pairs.map(|(&x, &y)| {
                let dx = x - target.x;
                let dy = y - target.y;
                dx * dx + dy * dy
            })),
        }
    }

    fn min_score(&self) -> f64 {
        let mut lanes = [f64::INFINITY; 4];
        let chunks = self.scores.chunks_exact(4);
        let tail = chunks.remainder();
        for c in chunks {
            for k in 0..4 {
                lanes[k] = if c[k] < lanes[k] { c[k] } else { lanes[k] };
            }
        }
        tail.iter()
            .chain(&lanes)
            .fold(f64::INFINITY, |a, &d| if d < a { d } else { a })
    }
}

/// [`route`] against a loaded frame.
pub fn route_frame<R: Rng + ?Sized>(
    policy: Policy,
    frame: &mut NeighborFrame,
    dest: AgentId,
    space: Space<'_>,
    rng: &mut R,
) -> RoutingDecision {
    if frame.contains(dest) {
        return RoutingDecision::Deliver;
    }
    if frame.ids.is_empty() {
        return RoutingDecision::Stuck;
    }
    let target = space.positions[dest as usize];
    match policy {
        Policy::Random => {
            let to = frame.ids[rng.gen_range(0..frame.ids.len())];
            let distance_after = distance_sq(space.positions[to as usize], target, space.side, space.metric).sqrt();
            RoutingDecision::Forward { to, distance_after }
        }
        Policy::Greedy => {
            frame.score(target, space.side, space.metric);
            let best_d = frame.min_score();
            let ties = frame.scores.iter().map(|&d| (d == best_d) as usize).sum::<usize>();
            let pick = if ties == 1 { 0 } else { rng.gen_range(0..ties) };
            let slot = frame
                .scores
                .iter()
                .enumerate()
                .filter(|&(_, &d)| d == best_d)
                .nth(pick)
                .expect("argmin set is non-empty")
                .0;
            RoutingDecision::Forward {
                to: frame.ids[slot],
                distance_after: best_d.sqrt(),
            }
        }
    }
}

pub fn route_random<R: Rng + ?Sized>(
    holder: AgentId,
    dest: AgentId,
    nbrs: &[AgentId],
    space: Space<'_>,
    rng: &mut R,
) -> RoutingDecision {
    debug_assert_ne!(holder, dest, "self-addressed packet reached routing");
    if nbrs.contains(&dest) {
        return RoutingDecision::Deliver;
    }
    if nbrs.is_empty() {
        return RoutingDecision::Stuck;
    }
    let to = nbrs[rng.gen_range(0..nbrs.len())];
    let distance_after = distance_sq(
        space.positions[to as usize],
        space.positions[dest as usize],
        space.side,
        space.metric,
    )
    .sqrt();
    RoutingDecision::Forward { to, distance_after }
}

pub fn route<R: Rng + ?Sized>(
    policy: Policy,
    holder: AgentId,
    dest: AgentId,
    nbrs: &[AgentId],
    space: Space<'_>,
    rng: &mut R,
) -> RoutingDecision {
    match policy {
        Policy::Greedy => route_greedy(holder, dest, nbrs, space, rng),
        Policy::Random => route_random(holder, dest, nbrs, space, rng),
    }
}
