//! The per-step traffic loop: mobility, packet generation, index rebuild,
//! capacity-limited FIFO delivery and, when seeded, the SIS update.

use std::collections::VecDeque;

use rand::Rng;

use crate::config::{Policy, QueueDiscipline, WorldConfig};
use crate::epidemic::{self, Health, Receipt};
use crate::error::Result;
use crate::geometry::{init_positions, step_mobility, Heading, Position};
use crate::rng::Streams;
use crate::routing::{route, route_frame, NeighborFrame, RoutingDecision, Space};
use crate::spatial::NeighborIndex;
use crate::AgentId;

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub source: AgentId,
    pub dest: AgentId,
    pub created_step: u64,
    pub hops: u32,
    /// Step at which the packet entered its current queue. A packet is
    /// forwardable only on later steps.
    pub arrived_step: u64,
    pub last_sender: Option<AgentId>,
    pub last_sender_infected: bool,
}

impl Packet {
    pub fn arrived_this_step(&self, t: u64) -> bool {
        self.arrived_step == t
    }
}

/// A packet removed at its destination.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub packet: Packet,
    pub step: u64,
    /// Steps spent in the system: delivery step minus creation step.
    pub travel_time: u64,
}

/// Read-only view of one agent.
#[derive(Debug, Clone, Copy)]
pub struct AgentState<'a> {
    pub id: AgentId,
    pub position: Position,
    pub heading: Heading,
    pub queue: &'a VecDeque<Packet>,
    pub health: Health,
}

/// Summary of one completed step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepRecord {
    pub t: u64,
    /// Packets in the system after the step (N_p(t)).
    pub packets: u64,
    pub generated: u64,
    pub deliveries: u64,
    pub travel_time_sum: u64,
    pub new_infections: u64,
    pub infected: u64,
    pub rho: f64,
}

pub struct World {
    config: WorldConfig,
    policy: Policy,
    positions: Vec<Position>,
    headings: Vec<Heading>,
    queues: Vec<VecDeque<Packet>>,
    health: Vec<Health>,
    index: NeighborIndex,
    streams: Streams,
    t: u64,
    next_packet_id: u64,
    in_system: u64,
    generated_total: u64,
    delivered_total: u64,
    seeded_step: Option<u64>,
    deliveries: Vec<Delivery>,
    receipts: Vec<Receipt>,
    nbr_buf: Vec<AgentId>,
    frame: NeighborFrame,
    epidemic_scratch: epidemic::Scratch,
}

impl World {
    /// Fresh world with uniformly placed agents and empty queues.
    pub fn new(config: WorldConfig, policy: Policy, seed: u64) -> Self {
        let mut streams = Streams::new(seed);
        let positions = init_positions(config.n_agents, config.side_length, &mut streams.placement);
        Self::assemble(config, policy, streams, positions)
    }

    /// World with a prescribed initial layout (static constructions, tests).
    pub fn with_positions(config: WorldConfig, policy: Policy, seed: u64, positions: Vec<Position>) -> Self {
        assert_eq!(positions.len(), config.n_agents, "layout size must equal n_agents");
        Self::assemble(config, policy, Streams::new(seed), positions)
    }

    fn assemble(config: WorldConfig, policy: Policy, streams: Streams, positions: Vec<Position>) -> Self {
        let n = config.n_agents;
        let index = NeighborIndex::new(config.side_length, config.radius, config.metric);
        Self {
            policy,
            headings: vec![Heading::default(); n],
            queues: (0..n).map(|_| VecDeque::new()).collect(),
            health: vec![Health::Susceptible; n],
            positions,
            index,
            streams,
            t: 0,
            next_packet_id: 0,
            in_system: 0,
            generated_total: 0,
            delivered_total: 0,
            seeded_step: None,
            deliveries: Vec::new(),
            receipts: Vec::new(),
            nbr_buf: Vec::new(),
            frame: NeighborFrame::new(),
            epidemic_scratch: epidemic::Scratch::default(),
            config,
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    /// Index of the next step to execute.
    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn n_agents(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn queue(&self, i: AgentId) -> &VecDeque<Packet> {
        &self.queues[i as usize]
    }

    pub fn queue_lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.queues.iter().map(VecDeque::len)
    }

    pub fn health(&self) -> &[Health] {
        &self.health
    }

    pub fn agent(&self, i: AgentId) -> AgentState<'_> {
        let k = i as usize;
        AgentState {
            id: i,
            position: self.positions[k],
            heading: self.headings[k],
            queue: &self.queues[k],
            health: self.health[k],
        }
    }

    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }

    /// Packets currently queued anywhere.
    pub fn packets_in_system(&self) -> u64 {
        self.in_system
    }

    pub fn generated_total(&self) -> u64 {
        self.generated_total
    }

    pub fn delivered_total(&self) -> u64 {
        self.delivered_total
    }

    pub fn infected_count(&self) -> usize {
        self.health.iter().filter(|h| h.is_infected()).count()
    }

    pub fn seeded_step(&self) -> Option<u64> {
        self.seeded_step
    }

    /// Deliveries made during the most recent delivery phase.
    pub fn last_deliveries(&self) -> &[Delivery] {
        &self.deliveries
    }

    /// Receipts recorded during the most recent delivery phase (only while
    /// the epidemic is running).
    pub fn last_receipts(&self) -> &[Receipt] {
        &self.receipts
    }

    pub fn step_mobility(&mut self) {
        step_mobility(
            &mut self.positions,
            &mut self.headings,
            self.config.speed,
            self.config.side_length,
            &mut self.streams.mobility,
        );
    }

    /// Append `gen_rate` packets with uniformly drawn, distinct source and
    /// destination to their source queues.
    pub fn generate_packets(&mut self, t: u64) {
        let n = self.positions.len();
        if n < 2 {
            return;
        }
        let rng = &mut self.streams.generation;
        for _ in 0..self.config.gen_rate {
            let source = rng.gen_range(0..n);
            let dest = loop {
                let d = rng.gen_range(0..n);
                if d != source {
                    break d;
                }
            };
            self.queues[source].push_back(Packet {
                id: self.next_packet_id,
                source: source as AgentId,
                dest: dest as AgentId,
                created_step: t,
                hops: 0,
                arrived_step: t,
                last_sender: None,
                last_sender_infected: false,
            });
            self.next_packet_id += 1;
        }
        self.in_system += self.config.gen_rate as u64;
        self.generated_total += self.config.gen_rate as u64;
    }

    /// Place a packet in `source`'s queue as if generated at step `t`.
    pub fn inject_packet(&mut self, source: AgentId, dest: AgentId, t: u64) -> u64 {
        assert_ne!(source, dest, "self-addressed packets are never generated");
        let id = self.next_packet_id;
        self.next_packet_id += 1;
        self.queues[source as usize].push_back(Packet {
            id,
            source,
            dest,
            created_step: t,
            hops: 0,
            arrived_step: t,
            last_sender: None,
            last_sender_infected: false,
        });
        self.in_system += 1;
        self.generated_total += 1;
        id
    }

    pub fn rebuild_index(&mut self, t: u64) {
        self.index.rebuild(&self.positions, t);
    }

    /// Route packets for step `t` on the current position snapshot. Agents
    /// act in ascending id order; each sends up to its capacity from the
    /// head of its queue, skipping nothing that arrived this step.
    pub fn delivery_phase(&mut self, t: u64) -> &[Delivery] {
        assert!(
            self.index.is_fresh(t),
            "delivery phase needs an index built for step {t}"
        );
        self.deliveries.clear();
        self.receipts.clear();
        let record_receipts = self.seeded_step.is_some();
        let budget = self.config.capacity.budget();
        let discipline = self.config.queue;
        let space = Space {
            positions: self.index.positions(),
            side: self.config.side_length,
            metric: self.config.metric,
        };
        for i in 0..self.queues.len() {
            match self.queues[i].front() {
                Some(p) if !p.arrived_this_step(t) => {}
                _ => continue,
            }
            let holder = i as AgentId;
            let mut queue = std::mem::take(&mut self.queues[i]);
            self.index.neighbors_into(holder, &mut self.nbr_buf);
            let framed = budget > 1 && queue.len() > 1;
            if framed {
                self.frame.load(&self.nbr_buf, space.positions);
            }
            let sender_infected = self.health[i].is_infected();
            let mut sent = 0usize;
            let mut cursor = 0usize;
            while sent < budget && cursor < queue.len() && !queue[cursor].arrived_this_step(t) {
                let dest = queue[cursor].dest;
                let decision = if framed {
                    route_frame(self.policy, &mut self.frame, dest, space, &mut self.streams.routing)
                } else {
                    route(
                        self.policy,
                        holder,
                        dest,
                        &self.nbr_buf,
                        space,
                        &mut self.streams.routing,
                    )
                };
                match decision {
                    RoutingDecision::Deliver => {
                        let packet = queue.remove(cursor).expect("cursor in range");
                        if record_receipts {
                            self.receipts.push(Receipt {
                                receiver: dest,
                                sender_infected,
                            });
                        }
                        let travel_time = t - packet.created_step;
                        self.deliveries.push(Delivery {
                            packet,
                            step: t,
                            travel_time,
                        });
                        sent += 1;
                    }
                    RoutingDecision::Forward { to, .. } => {
                        let mut packet = queue.remove(cursor).expect("cursor in range");
                        packet.hops += 1;
                        packet.arrived_step = t;
                        packet.last_sender = Some(holder);
                        packet.last_sender_infected = sender_infected;
                        if record_receipts {
                            self.receipts.push(Receipt {
                                receiver: to,
                                sender_infected,
                            });
                        }
                        self.queues[to as usize].push_back(packet);
                        sent += 1;
                    }
                    RoutingDecision::Stuck => match discipline {
                        QueueDiscipline::Strict => break,
                        QueueDiscipline::SkipStuck => cursor += 1,
                    },
                }
            }
            self.queues[i] = queue;
        }
        let delivered = self.deliveries.len() as u64;
        self.in_system -= delivered;
        self.delivered_total += delivered;
        &self.deliveries
    }

    /// Infect exactly round(ρ₀·N) distinct agents chosen uniformly.
    pub fn seed_infection(&mut self) -> Result<()> {
        epidemic::seed_infection(
            &mut self.health,
            self.config.initial_infected_fraction,
            &mut self.streams.epidemic,
        )?;
        self.seeded_step = Some(self.t);
        Ok(())
    }

    /// Execute one full step and advance the clock.
    pub fn step(&mut self) -> StepRecord {
        let t = self.t;
        if self.config.epidemic && self.seeded_step.is_none() && t >= self.config.transient_steps {
            self.seed_infection()
                .expect("initial infected fraction validated before the run");
        }
        self.step_mobility();
        self.generate_packets(t);
        self.rebuild_index(t);
        self.delivery_phase(t);
        let mut new_infections = 0;
        if self.seeded_step.is_some() {
            new_infections = epidemic::epidemic_update(
                &mut self.health,
                &self.receipts,
                self.config.spread_rate,
                self.config.recovery_rate,
                &mut self.streams.epidemic,
                &mut self.epidemic_scratch,
            );
        }
        self.t += 1;
        let infected = self.infected_count() as u64;
        StepRecord {
            t,
            packets: self.in_system,
            generated: self.config.gen_rate as u64,
            deliveries: self.deliveries.len() as u64,
            travel_time_sum: self.deliveries.iter().map(|d| d.travel_time).sum(),
            new_infections,
            infected,
            rho: infected as f64 / self.positions.len() as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Capacity, Metric};

    fn cfg(n: usize) -> WorldConfig {
        WorldConfig {
            n_agents: n,
            speed: 0.0,
            radius: 1.0,
            gen_rate: 0,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn zero_rate_leaves_state_unchanged() {
        let mut w = World::new(cfg(30), Policy::Greedy, 1);
        for _ in 0..50 {
            let rec = w.step();
            assert_eq!(rec.packets, 0);
        }
        assert!(w.queue_lengths().all(|l| l == 0));
    }

    #[test]
    fn generation_adds_exactly_rate_packets() {
        let c = WorldConfig {
            gen_rate: 5,
            ..WorldConfig::default()
        };
        let mut w = World::new(c, Policy::Greedy, 3);
        w.generate_packets(0);
        assert_eq!(w.packets_in_system(), 5);
        assert_eq!(w.queue_lengths().sum::<usize>(), 5);
        for i in 0..w.n_agents() as AgentId {
            for p in w.queue(i) {
                assert_eq!(p.source, i);
                assert_ne!(p.source, p.dest);
                assert!(p.arrived_this_step(0));
            }
        }
    }

    #[test]
    fn source_destination_pairs_are_uniform() {
        let mut c = cfg(10);
        c.gen_rate = 100_000;
        let mut w = World::new(c, Policy::Greedy, 5);
        w.generate_packets(0);
        let mut counts = [[0u32; 10]; 10];
        for i in 0..10 {
            for p in w.queue(i) {
                counts[p.source as usize][p.dest as usize] += 1;
            }
        }
        let expected = 100_000.0 / 90.0;
        let sigma = (100_000.0f64 * (1.0 / 90.0) * (89.0 / 90.0)).sqrt();
        let mut chi2 = 0.0;
        for (s, row) in counts.iter().enumerate() {
            for (d, &n) in row.iter().enumerate() {
                if s == d {
                    assert_eq!(n, 0);
                    continue;
                }
                let dev = f64::from(n) - expected;
                assert!(dev.abs() < 3.0 * sigma, "pair ({s}, {d}) count {n}");
                chi2 += dev * dev / expected;
            }
        }
        // 89 degrees of freedom; 135 is beyond the 99.9% quantile.
        assert!(chi2 < 135.0, "chi-square {chi2}");
    }

    #[test]
    fn fresh_packet_waits_one_step() {
        let pos = vec![Position::new(1.0, 1.0), Position::new(1.5, 1.0)];
        let mut w = World::with_positions(cfg(2), Policy::Greedy, 0, pos);
        w.inject_packet(0, 1, 0);
        w.rebuild_index(0);
        assert!(w.delivery_phase(0).is_empty());
        w.rebuild_index(1);
        let d = w.delivery_phase(1).to_vec();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].travel_time, 1);
        assert_eq!(w.packets_in_system(), 0);
    }

    #[test]
    fn capacity_limits_sends_in_fifo_order() {
        let pos = vec![Position::new(1.0, 1.0), Position::new(1.5, 1.0)];
        let mut c = cfg(2);
        c.capacity = Capacity::Finite(2);
        let mut w = World::with_positions(c, Policy::Greedy, 0, pos);
        let ids: Vec<u64> = (0..3).map(|_| w.inject_packet(0, 1, 0)).collect();
        w.rebuild_index(1);
        let delivered: Vec<u64> = w.delivery_phase(1).iter().map(|d| d.packet.id).collect();
        assert_eq!(delivered, ids[..2]);
        assert_eq!(w.queue(0).front().map(|p| p.id), Some(ids[2]));
    }

    #[test]
    fn chain_delivers_in_four_hops() {
        let pos: Vec<Position> = (0..5).map(|k| Position::new(1.0 + 0.9 * k as f64, 5.0)).collect();
        let mut w = World::with_positions(cfg(5), Policy::Greedy, 0, pos);
        w.inject_packet(0, 4, 0);
        let mut delivered = Vec::new();
        for t in 1..10 {
            w.rebuild_index(t);
            delivered.extend(w.delivery_phase(t).iter().cloned());
        }
        assert_eq!(delivered.len(), 1);
        // Three relays, then the direct hand-off to the destination.
        assert_eq!(delivered[0].packet.hops, 3);
        assert_eq!(delivered[0].travel_time, 4);
        assert_eq!(delivered[0].packet.last_sender, Some(2));
    }

    #[test]
    fn packet_moves_at_most_one_hop_per_step() {
        // Ascending-id processing would otherwise carry the packet 0 → 1 → 2 → 3.
        let pos: Vec<Position> = (0..5).map(|k| Position::new(1.0 + 0.9 * k as f64, 5.0)).collect();
        let mut w = World::with_positions(cfg(5), Policy::Greedy, 0, pos);
        w.inject_packet(0, 4, 0);
        w.rebuild_index(1);
        w.delivery_phase(1);
        assert_eq!(w.queue(1).len(), 1);
        assert_eq!(w.queue(1)[0].hops, 1);
        assert!(w.queue(2).is_empty());
    }

    #[test]
    fn stuck_head_blocks_queue_under_strict_fifo() {
        let pos = vec![Position::new(1.0, 1.0), Position::new(5.0, 5.0)];
        let mut w = World::with_positions(cfg(2), Policy::Greedy, 0, pos.clone());
        w.inject_packet(0, 1, 0);
        w.inject_packet(0, 1, 0);
        w.rebuild_index(1);
        assert!(w.delivery_phase(1).is_empty());
        assert_eq!(w.queue(0).len(), 2);

        let mut c = cfg(2);
        c.queue = QueueDiscipline::SkipStuck;
        let mut w = World::with_positions(c, Policy::Greedy, 0, pos);
        w.inject_packet(0, 1, 0);
        w.rebuild_index(1);
        assert!(w.delivery_phase(1).is_empty());
        assert_eq!(w.queue(0).len(), 1);
    }

    #[test]
    #[should_panic(expected = "delivery phase needs an index")]
    fn stale_index_is_rejected() {
        let mut w = World::new(cfg(4), Policy::Greedy, 0);
        w.rebuild_index(0);
        w.delivery_phase(1);
    }

    #[test]
    fn infinite_capacity_routes_every_eligible_packet() {
        let mut c = cfg(200);
        c.capacity = Capacity::Infinite;
        c.side_length = 3.0;
        c.speed = 0.1;
        c.gen_rate = 300;
        let mut w = World::new(c, Policy::Greedy, 8);
        for _ in 0..100 {
            w.step();
            // Only packets that arrived during the step remain queued.
            let t = w.time() - 1;
            for i in 0..200 {
                assert!(w.queue(i).iter().all(|p| p.arrived_this_step(t)));
            }
        }
    }

    #[test]
    fn euclidean_metric_walls_off_boundary() {
        let pos = vec![Position::new(0.2, 5.0), Position::new(9.9, 5.0)];
        let mut c = cfg(2);
        c.metric = Metric::Euclidean;
        let mut w = World::with_positions(c, Policy::Greedy, 0, pos);
        w.inject_packet(0, 1, 0);
        w.rebuild_index(1);
        assert!(w.delivery_phase(1).is_empty());
    }
}
