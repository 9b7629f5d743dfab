//! Oracle checks shared by the property tests and the acceptance suite.
//! Each panics on the first violation.

#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use mobinet::epidemic::{epidemic_update, Health, Receipt, Scratch};
use mobinet::experiment::run_table;
use mobinet::geometry::{torus_distance, Position};
use mobinet::rng::{substream, Stream};
use mobinet::routing::{route_greedy, RoutingDecision, Space};
use mobinet::spatial::NeighborIndex;
use mobinet::{run_realization, AgentId, Capacity, Metric, Policy, RunOptions, World, WorldConfig};
use rand::seq::index::sample;
use rand::Rng;

pub fn random_point<R: Rng>(rng: &mut R, side: f64) -> Position {
    Position::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side))
}

fn brute_neighbors(positions: &[Position], i: usize, r: f64, side: f64, metric: Metric) -> Vec<AgentId> {
    let mut out: Vec<AgentId> = (0..positions.len())
        .filter(|&j| j != i && mobinet::geometry::distance(positions[i], positions[j], side, metric) < r)
        .map(|j| j as AgentId)
        .collect();
    out.sort_unstable();
    out
}

pub fn metric_axioms() {
    let mut rng = substream(101, Stream::Placement);
    let side = 10.0;
    let bound = side / 2f64.sqrt() + 1e-12;
    for _ in 0..100_000 {
        let (a, b, c) = (
            random_point(&mut rng, side),
            random_point(&mut rng, side),
            random_point(&mut rng, side),
        );
        let ab = torus_distance(a, b, side);
        assert_eq!(torus_distance(a, a, side), 0.0);
        assert_eq!(ab, torus_distance(b, a, side));
        assert!(ab > 0.0 || a == b);
        assert!(ab <= bound);
        assert!(ab <= torus_distance(a, c, side) + torus_distance(c, b, side) + 1e-12);
    }
}

pub fn index_matches_oracle() {
    let mut rng = substream(202, Stream::Placement);
    let mut buf = Vec::new();
    for config in 0..1000u64 {
        let n = rng.gen_range(0..=100);
        let side = rng.gen_range(1.0..20.0);
        let r = rng.gen_range(0.01..0.49) * side;
        let metric = if config % 3 == 0 {
            Metric::Euclidean
        } else {
            Metric::Torus
        };
        let positions: Vec<Position> = (0..n).map(|_| random_point(&mut rng, side)).collect();
        let mut index = NeighborIndex::new(side, r, metric);
        index.rebuild(&positions, config);
        for i in 0..n {
            index.neighbors_into(i as AgentId, &mut buf);
            buf.sort_unstable();
            assert_eq!(
                buf,
                brute_neighbors(&positions, i, r, side, metric),
                "config {config}, agent {i}"
            );
        }
    }
}

pub fn greedy_is_argmin() {
    let mut rng = substream(303, Stream::Placement);
    let mut route_rng = substream(303, Stream::Routing);
    let side = 10.0;
    for case in 0..10_000 {
        let n = rng.gen_range(3..40);
        let positions: Vec<Position> = (0..n).map(|_| random_point(&mut rng, side)).collect();
        let k = rng.gen_range(0..n - 1);
        let nbrs: Vec<AgentId> = sample(&mut rng, n - 2, k)
            .into_iter()
            .map(|j| j as AgentId + 2)
            .collect();
        let space = Space {
            positions: &positions,
            side,
            metric: Metric::Torus,
        };
        let decision = route_greedy(0, 1, &nbrs, space, &mut route_rng);
        let dist = |j: AgentId| torus_distance(positions[j as usize], positions[1], side);
        match decision {
            RoutingDecision::Forward { to, distance_after } => {
                let best = nbrs.iter().map(|&j| dist(j)).fold(f64::INFINITY, f64::min);
                assert!(nbrs.contains(&to), "case {case}");
                assert_eq!(dist(to), best, "case {case}");
                assert!((distance_after - best).abs() < 1e-12);
            }
            RoutingDecision::Stuck => assert!(nbrs.is_empty(), "case {case}"),
            RoutingDecision::Deliver => panic!("destination was never offered as a neighbor"),
        }
    }
}

/// Every step of a long run: conservation, FIFO order of surviving
/// packets, the one-hop bound and freshness.
pub fn conservation_and_fifo() {
    let config = WorldConfig {
        n_agents: 300,
        side_length: 5.0,
        radius: 0.5,
        speed: 0.1,
        gen_rate: 30,
        capacity: Capacity::Finite(2),
        transient_steps: 10,
        measure_steps: 10_000,
        ..WorldConfig::default()
    };
    let mut world = World::new(config, Policy::Greedy, 7);
    let mut previous: Vec<Vec<u64>> = vec![Vec::new(); 300];
    let mut hops: HashMap<u64, u32> = HashMap::new();
    for _ in 0..10_000 {
        let record = world.step();
        let t = record.t;
        let queued: usize = world.queue_lengths().sum();
        assert_eq!(
            world.generated_total(),
            world.delivered_total() + queued as u64,
            "step {t}"
        );
        assert_eq!(world.packets_in_system(), queued as u64);
        assert_eq!(record.packets, queued as u64);
        let mut seen = 0usize;
        for (i, prev) in previous.iter_mut().enumerate() {
            let queue: &VecDeque<_> = world.queue(i as AgentId);
            let ids: Vec<u64> = queue.iter().map(|p| p.id).collect();
            // Packets that stayed keep their relative order, and every
            // newcomer is behind them.
            let stayed: Vec<u64> = prev.iter().copied().filter(|id| ids.contains(id)).collect();
            assert_eq!(&ids[..stayed.len()], &stayed[..], "agent {i} step {t}");
            for p in queue {
                assert_ne!(p.source, p.dest);
                assert!(p.arrived_step <= t);
                let before = hops.insert(p.id, p.hops).unwrap_or(0);
                assert!(p.hops <= before + 1, "packet {} jumped hops", p.id);
            }
            seen += ids.len();
            *prev = ids;
        }
        assert_eq!(seen, queued);
        for d in world.last_deliveries() {
            hops.remove(&d.packet.id);
            assert!(d.travel_time >= 1);
        }
    }
}

/// Largest deviation over k in {1, 2, 3}, in standard deviations.
pub fn infection_frequency() -> f64 {
    let beta = 0.3;
    let agents = 60_000;
    let mut rng = substream(404, Stream::Epidemic);
    let mut scratch = Scratch::default();
    let mut worst = 0.0f64;
    for k in 1..=3u32 {
        let mut health = vec![Health::Susceptible; agents];
        let receipts: Vec<Receipt> = (0..agents as AgentId)
            .flat_map(|receiver| {
                (0..k).map(move |_| Receipt {
                    receiver,
                    sender_infected: true,
                })
            })
            .collect();
        epidemic_update(&mut health, &receipts, beta, 1.0, &mut rng, &mut scratch);
        let infected = health.iter().filter(|h| h.is_infected()).count() as f64;
        let p = 1.0 - (1.0 - beta).powi(k as i32);
        let sigma = (agents as f64 * p * (1.0 - p)).sqrt();
        let dev = (infected - agents as f64 * p).abs();
        assert!(
            dev < 3.0 * sigma,
            "k={k}: {infected} infected, expected {:.1}",
            agents as f64 * p
        );
        worst = worst.max(dev / sigma);
    }
    worst
}

/// Two seeded runs of a small epidemic world give byte-identical traces,
/// both in-process and through the command-line tool.
pub fn determinism() {
    let config = WorldConfig {
        n_agents: 200,
        side_length: 5.0,
        gen_rate: 25,
        capacity: Capacity::Finite(2),
        spread_rate: 0.4,
        epidemic: true,
        transient_steps: 50,
        measure_steps: 300,
        ..WorldConfig::default()
    };
    for policy in [Policy::Greedy, Policy::Random] {
        let a = run_realization(&config, policy, 77, RunOptions::default()).unwrap();
        let b = run_realization(&config, policy, 77, RunOptions::default()).unwrap();
        assert_eq!(run_table(&a).to_csv(), run_table(&b).to_csv());
        assert_eq!(a.loads, b.loads);
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("d.cfg");
    std::fs::write(&cfg, "n_agents = 200\nside_length = 5\ngen_rate = 25\ntransient_steps = 50\nmeasure_steps = 300\nepidemic = true\nspread_rate = 0.4\n").unwrap();
    let mut csvs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("{k}.csv"));
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_mobinet"))
            .args([
                "run",
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                "5",
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(status.status.success());
        csvs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}
