//! Independent oracles and instance generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use bulkcast::engine::workload::{generate_workload, ArrivalProcess, VolumeDistribution, WorkloadSpec};
use bulkcast::topology::{bundled, LinkRecord, Topology, TopologyFile};
use bulkcast::{NodeId, TransferRequest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Max-min fair rates with demand caps, by bisection on the common level.
///
/// Each round finds the highest level `t` such that giving every unfixed
/// flow `min(demand, t)` stays within capacity, then fixes the flows that
/// hit their demand or cross an edge left without slack.
pub fn max_min_oracle(capacity: &[f64], flows: &[(Vec<usize>, f64)]) -> Vec<f64> {
    let mut fixed: Vec<Option<f64>> = flows.iter().map(|(_, d)| (*d <= 0.0).then_some(0.0)).collect();
    let edge_load = |fixed: &[Option<f64>], t: f64| -> Vec<f64> {
        let mut load = vec![0.0; capacity.len()];
        for ((edges, d), f) in flows.iter().zip(fixed) {
            let r = f.unwrap_or(d.min(t));
            for &e in edges {
                load[e] += r;
            }
        }
        load
    };
    let feasible = |fixed: &[Option<f64>], t: f64| {
        edge_load(fixed, t).iter().zip(capacity).all(|(l, c)| *l <= *c)
    };

    while fixed.iter().any(Option::is_none) {
        let hi_demand = flows
            .iter()
            .zip(&fixed)
            .filter(|(_, f)| f.is_none())
            .map(|((_, d), _)| *d)
            .fold(0.0, f64::max);
        let mut hi = hi_demand.min(capacity.iter().sum::<f64>());
        let mut lo = 0.0;
        if feasible(&fixed, hi) {
            lo = hi;
        } else {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if feasible(&fixed, mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        let level = lo;
        let load = edge_load(&fixed, level);
        let slack: Vec<f64> = capacity.iter().zip(&load).map(|(c, l)| c - l).collect();
        let tight = |e: usize| slack[e] <= 1e-11 * capacity[e].max(1.0);
        let mut progressed = false;
        for (i, (edges, d)) in flows.iter().enumerate() {
            if fixed[i].is_some() {
                continue;
            }
            if *d <= level {
                fixed[i] = Some(*d);
                progressed = true;
            } else if edges.iter().any(|&e| tight(e)) {
                fixed[i] = Some(level);
                progressed = true;
            }
        }
        if !progressed {
            // freeze the flows on the edge with the least slack
            let e = (0..capacity.len())
                .filter(|&e| flows.iter().zip(&fixed).any(|((es, _), f)| f.is_none() && es.contains(&e)))
                .min_by(|&a, &b| slack[a].total_cmp(&slack[b]))
                .expect("unfixed flows cross some edge");
            for (i, (edges, _)) in flows.iter().enumerate() {
                if fixed[i].is_none() && edges.contains(&e) {
                    fixed[i] = Some(level);
                }
            }
        }
    }
    fixed.into_iter().map(Option::unwrap).collect()
}

/// A small allocation instance: capacities and `(edges, demand)` flows.
pub struct AllocInstance {
    pub capacity: Vec<f64>,
    pub flows: Vec<(Vec<usize>, f64)>,
}

pub fn random_alloc_instance(rng: &mut ChaCha8Rng) -> AllocInstance {
    let m = rng.random_range(1..=6);
    let capacity: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..10.0)).collect();
    let k = rng.random_range(1..=5);
    let flows = (0..k)
        .map(|_| {
            let mut edges: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.5)).collect();
            if edges.is_empty() {
                edges.push(rng.random_range(0..m));
            }
            let demand = if rng.random_bool(0.3) { f64::INFINITY } else { rng.random_range(0.05..8.0) };
            (edges, demand)
        })
        .collect();
    AllocInstance { capacity, flows }
}

/// A connected graph on `nodes` vertices: a random spanning tree plus up to
/// `extra` further links, all capacity 1.
pub fn random_connected(rng: &mut ChaCha8Rng, nodes: usize, extra: usize) -> Topology<f64> {
    let mut links: BTreeSet<(usize, usize)> = BTreeSet::new();
    for v in 1..nodes {
        let u = rng.random_range(0..v);
        links.insert((u, v));
    }
    for _ in 0..extra {
        let a = rng.random_range(0..nodes);
        let b = rng.random_range(0..nodes);
        if a != b {
            links.insert((a.min(b), a.max(b)));
        }
    }
    Topology::from_file(
        TopologyFile {
            name: "random".into(),
            capacity_unit: String::new(),
            nodes: (0..nodes).map(|i| format!("v{i}")).collect(),
            links: links
                .into_iter()
                .map(|(a, b)| LinkRecord { a: format!("v{a}"), b: format!("v{b}"), capacity: 1.0 })
                .collect(),
        },
        false,
    )
    .unwrap()
}

pub fn random_terminals(rng: &mut ChaCha8Rng, nodes: usize, root: usize, max: usize) -> BTreeSet<NodeId> {
    let k = rng.random_range(1..=max.min(nodes - 1));
    let mut out = BTreeSet::new();
    while out.len() < k {
        let t = rng.random_range(0..nodes);
        if t != root {
            out.insert(NodeId::from(t));
        }
    }
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn geant() -> Topology<f64> {
    Topology::from_json_str(bundled::GEANT).unwrap()
}

pub fn ans() -> Topology<f64> {
    Topology::from_json_str(bundled::ANS).unwrap()
}

/// Poisson arrivals at one transfer per slot, 8 receivers, exponential
/// volumes of mean 20, 200 transfers.
pub fn geant_workload(topo: &Topology<f64>, seed: u64) -> Vec<TransferRequest> {
    let spec = WorkloadSpec {
        arrivals: ArrivalProcess::Poisson { rate: 1.0 },
        volume: VolumeDistribution::Exponential { mean: 20.0 },
        receivers: 8,
        transfers: 200,
        seed,
        delta: 1.0,
    };
    generate_workload(&spec, topo).unwrap()
}
