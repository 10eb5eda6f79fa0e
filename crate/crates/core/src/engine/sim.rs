use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{EngineError, RequestId, Scheme, SimConfig, TransferRequest};
use crate::load::{link_load, LinkState, WeightStrategy};
use crate::metrics::{group_table_entries, GroupEntry, MetricsReport, ReceiverRecord, RequestRecord, TimelineRecord};
use crate::num::Real;
use crate::partition::{compute_min_hop_path, compute_partitions_and_trees, compute_tree, Group, PartitionState};
use crate::schedule::{allocate, apply_allocation, check_feasibility, FlowSpec};
use crate::steiner::{ForwardingTree, SteinerError};
use crate::topology::{HopDistanceMatrix, NodeId, Topology};

struct Active<T> {
    state: PartitionState<T>,
    entries: Vec<GroupEntry>,
}

/// What happened in one timeslot.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub slot: u64,
    /// `(request, partition, rate)` for every partition active in the slot.
    pub rates: Vec<(RequestId, usize, T)>,
    pub delivered: T,
    pub completed: Vec<(RequestId, usize)>,
}

/// One run's mutable state. Each [`Simulation::step`] processes one slot:
/// admit the requests arriving at its start, allocate rates, deliver, and
/// record completions at its end.
pub struct Simulation<'a, T: Real> {
    topo: &'a Topology<T>,
    config: SimConfig,
    delta: T,
    hops: HopDistanceMatrix,
    links: LinkState<T>,
    pending: VecDeque<TransferRequest<T>>,
    forced: BTreeMap<RequestId, Vec<BTreeSet<NodeId>>>,
    active: Vec<Active<T>>,
    finished: Vec<PartitionState<T>>,
    now: u64,
    report: MetricsReport,
    max_load_error: f64,
}

impl<'a, T: Real> Simulation<'a, T> {
    pub fn new(topo: &'a Topology<T>, config: SimConfig, requests: Vec<TransferRequest<T>>) -> Result<Self, EngineError> {
        config.validate()?;
        let mut ids = BTreeSet::new();
        for r in &requests {
            let bad = |message: &str| EngineError::BadRequest { id: r.id, message: message.to_string() };
            if !ids.insert(r.id) {
                return Err(bad("duplicate request id"));
            }
            if r.receivers.is_empty() {
                return Err(bad("no receivers"));
            }
            if std::iter::once(&r.source).chain(&r.receivers).any(|n| !topo.contains_node(*n)) {
                return Err(bad("unknown node"));
            }
            if r.receivers.contains(&r.source) {
                return Err(bad("source is also a receiver"));
            }
            if !(r.volume > T::zero() && r.volume.is_finite()) {
                return Err(bad("volume must be positive and finite"));
            }
        }
        let mut pending = requests;
        pending.sort_by_key(|r| r.arrival);
        Ok(Self {
            topo,
            config,
            delta: T::lit(config.delta),
            hops: topo.hop_distances(),
            links: LinkState::new(topo),
            pending: pending.into(),
            forced: BTreeMap::new(),
            active: Vec::new(),
            finished: Vec::new(),
            now: 0,
            report: MetricsReport::default(),
            max_load_error: 0.0,
        })
    }

    /// Routes request `id` with the given receiver groups instead of the
    /// configured scheme. Each group gets a tree under the configured weight.
    pub fn force_partitions(&mut self, id: RequestId, groups: Vec<BTreeSet<NodeId>>) {
        self.forced.insert(id, groups);
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn is_done(&self) -> bool {
        self.pending.is_empty() && self.active.is_empty()
    }

    pub fn link_state(&self) -> &LinkState<T> {
        &self.links
    }

    pub fn active_partitions(&self) -> impl Iterator<Item = &PartitionState<T>> {
        self.active.iter().map(|a| &a.state)
    }

    pub fn finished_partitions(&self) -> &[PartitionState<T>] {
        &self.finished
    }

    /// Largest `|incremental - recomputed|` link load seen so far; only
    /// tracked with `check_bookkeeping`.
    pub fn max_load_error(&self) -> f64 {
        self.max_load_error
    }

    /// Recomputes every link load from the active partitions' residuals.
    pub fn load_error(&self) -> f64 {
        (0..self.links.edge_count())
            .map(|e| {
                let e = e.into();
                let fresh = link_load(&self.links, e, self.active.iter().map(|a| (&a.state.tree, a.state.residual)));
                (self.links.load(e) - fresh).abs().as_f64()
            })
            .fold(0.0, f64::max)
    }

    fn route(&mut self, request: &TransferRequest<T>) -> Result<(Vec<Group<T>>, T, T), EngineError> {
        let routing = |source: SteinerError| EngineError::Routing { id: request.id, source };
        let (topo, links) = (self.topo, &mut self.links);
        let (src, vol) = (request.source, request.volume);
        let summed = |groups: Vec<(BTreeSet<NodeId>, ForwardingTree<T>)>| {
            let w = groups.iter().map(|(_, t)| t.weight).sum();
            (groups, w, w)
        };
        if let Some(groups) = self.forced.remove(&request.id) {
            let mut out = Vec::with_capacity(groups.len());
            for g in groups {
                let tree = compute_tree(topo, links, self.config.weight, src, &g, vol).map_err(routing)?;
                out.push((g, tree));
            }
            return Ok(summed(out));
        }
        Ok(match self.config.scheme {
            Scheme::QuickCast => {
                let plan = compute_partitions_and_trees(request, topo, &self.hops, links, &self.config.partition_config())
                    .map_err(|source| EngineError::Partitioning { id: request.id, source })?;
                (plan.groups, plan.budget_weight_sum, plan.single_tree_weight)
            }
            Scheme::SingleTree | Scheme::MinEdgeSteiner => {
                let strategy =
                    if self.config.scheme == Scheme::SingleTree { self.config.weight } else { WeightStrategy::Unit };
                let tree = compute_tree(topo, links, strategy, src, &request.receivers, vol).map_err(routing)?;
                summed(vec![(request.receivers.clone(), tree)])
            }
            Scheme::UnicastMinHop => {
                let mut out = Vec::with_capacity(request.receivers.len());
                for &r in &request.receivers {
                    let path = compute_min_hop_path(topo, links, src, r, vol).map_err(routing)?;
                    out.push((BTreeSet::from([r]), path));
                }
                summed(out)
            }
        })
    }

    fn admit(&mut self, request: TransferRequest<T>) -> Result<(), EngineError> {
        let (groups, budget_weight_sum, single_tree_weight) = self.route(&request)?;
        let edges: usize = groups.iter().map(|(_, t)| t.edge_count()).sum();
        self.report.requests.push(RequestRecord {
            request_id: request.id,
            volume: request.volume.as_f64(),
            n_partitions: groups.len(),
            bandwidth: edges as f64 * request.volume.as_f64(),
            budget_weight_sum: budget_weight_sum.as_f64(),
            single_tree_weight: single_tree_weight.as_f64(),
        });
        for (i, (receivers, tree)) in groups.into_iter().enumerate() {
            let entries = group_table_entries(&tree, self.topo);
            self.active.push(Active { state: PartitionState::new(&request, i, receivers, tree), entries });
        }
        Ok(())
    }

    /// Group-table entries held by the busiest switch right now.
    pub fn max_group_entries(&self) -> usize {
        let mut per_node: BTreeMap<NodeId, usize> = BTreeMap::new();
        for entry in self.active.iter().flat_map(|a| &a.entries) {
            *per_node.entry(entry.node).or_insert(0) += 1;
        }
        per_node.into_values().max().unwrap_or(0)
    }

    /// Advances one timeslot.
    pub fn step(&mut self) -> Result<StepOutcome<T>, EngineError> {
        let slot = self.now;
        while self.pending.front().is_some_and(|r| r.arrival <= slot) {
            let request = self.pending.pop_front().unwrap();
            self.admit(request)?;
        }

        let active_count = self.active.len();
        let max_group_entries = self.max_group_entries();
        let rates = {
            let refs: Vec<&PartitionState<T>> = self.active.iter().map(|a| &a.state).collect();
            let rates = allocate(self.config.policy, self.links.capacities(), &refs, self.delta);
            let flows: Vec<FlowSpec<'_, T>> =
                refs.iter().map(|p| FlowSpec { edges: &p.tree.edges, demand: p.residual / self.delta }).collect();
            check_feasibility(self.links.capacities(), &flows, &rates)
                .map_err(|source| EngineError::Infeasible { slot, source })?;
            rates
        };

        let mut states: Vec<&mut PartitionState<T>> = self.active.iter_mut().map(|a| &mut a.state).collect();
        let outcome = apply_allocation(&mut self.links, &mut states, &rates, self.delta, slot + 1);
        let delivered: T = outcome.delivered.iter().copied().sum();
        if active_count > 0 && delivered <= T::zero() {
            return Err(EngineError::Stalled { slot, active: active_count });
        }

        let step = StepOutcome {
            slot,
            rates: self.active.iter().zip(&rates).map(|(a, &r)| (a.state.request, a.state.partition, r)).collect(),
            delivered,
            completed: outcome.completed.iter().map(|&i| (self.active[i].state.request, self.active[i].state.partition)).collect(),
        };

        for &i in &outcome.completed {
            let p = &self.active[i].state;
            for &r in &p.receivers {
                self.report.receivers.push(ReceiverRecord {
                    request_id: p.request,
                    receiver: self.topo.node_name(r).to_string(),
                    arrival_slot: p.arrival,
                    completion_slot: slot + 1,
                    partition_id: p.partition,
                    partition_size: p.receivers.len(),
                    rank: 0,
                });
            }
        }
        let (done, still): (Vec<Active<T>>, Vec<Active<T>>) =
            std::mem::take(&mut self.active).into_iter().partition(|a| a.state.is_complete());
        self.active = still;
        self.finished.extend(done.into_iter().map(|a| a.state));

        self.report.timeline.push(TimelineRecord {
            slot,
            delivered_volume: delivered.as_f64(),
            active_partitions: active_count,
            max_group_entries,
        });
        if self.config.check_bookkeeping {
            self.max_load_error = self.max_load_error.max(self.load_error());
        }
        self.now += 1;
        Ok(step)
    }

    /// Steps until every request has completed.
    pub fn run_to_end(&mut self) -> Result<(), EngineError> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    /// The run's records, with receiver ranks assigned.
    pub fn report(&self) -> MetricsReport {
        let mut report = self.report.clone();
        let topo = self.topo;
        report.assign_ranks(|r| topo.node_id(&r.receiver).map_or(u64::MAX, |n| u64::from(n.0)));
        report
    }
}

/// Runs `requests` to completion and returns the metrics.
pub fn run<T: Real>(topo: &Topology<T>, config: SimConfig, requests: Vec<TransferRequest<T>>) -> Result<MetricsReport, EngineError> {
    let mut sim = Simulation::new(topo, config, requests)?;
    sim.run_to_end()?;
    Ok(sim.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::workload::{generate_workload, WorkloadSpec};
    use crate::schedule::Policy;
    use crate::topology::{bundled, LinkRecord, TopologyFile};

    fn line(capacity: f64, hops: usize) -> Topology<f64> {
        Topology::from_file(
            TopologyFile {
                name: "line".into(),
                capacity_unit: String::new(),
                nodes: (0..=hops).map(|i| format!("n{i}")).collect(),
                links: (0..hops)
                    .map(|i| LinkRecord { a: format!("n{i}"), b: format!("n{}", i + 1), capacity })
                    .collect(),
            },
            false,
        )
        .unwrap()
    }

    fn req(id: RequestId, source: u32, receivers: &[u32], volume: f64, arrival: u64) -> TransferRequest<f64> {
        TransferRequest {
            id,
            source: NodeId(source),
            receivers: receivers.iter().map(|&r| NodeId(r)).collect(),
            volume,
            arrival,
        }
    }

    #[test]
    fn zero_transfers_take_zero_slots() {
        let t = line(1.0, 2);
        let mut sim = Simulation::new(&t, SimConfig::default(), vec![]).unwrap();
        sim.run_to_end().unwrap();
        assert_eq!(sim.now(), 0);
        assert_eq!(sim.report(), MetricsReport::default());
    }

    #[test]
    fn single_path_transfer() {
        let t = line(1.0, 3);
        let report = run(&t, SimConfig::default(), vec![req(0, 0, &[3], 10.0, 0)]).unwrap();
        assert_eq!(report.receivers.len(), 1);
        assert_eq!(report.receivers[0].completion_slot, 10);
        assert_eq!(report.requests[0].bandwidth, 30.0);
        assert_eq!(report.timeline.len(), 10);
    }

    #[test]
    fn idle_slot_advances_time_only() {
        let t = line(1.0, 1);
        let mut sim = Simulation::new(&t, SimConfig::default(), vec![req(0, 0, &[1], 1.0, 2)]).unwrap();
        let out = sim.step().unwrap();
        assert!(out.rates.is_empty());
        assert_eq!(sim.now(), 1);
        assert_eq!(sim.link_state().load(0usize.into()), 0.0);
        sim.run_to_end().unwrap();
        assert_eq!(sim.report().receivers[0].completion_time(), 1);
    }

    #[test]
    fn residual_drops_by_delta_per_slot() {
        let t = line(1.0, 1);
        let cfg = SimConfig { delta: 0.5, ..Default::default() };
        let mut sim = Simulation::new(&t, cfg, vec![req(0, 0, &[1], 3.0, 0)]).unwrap();
        sim.step().unwrap();
        assert_eq!(sim.active_partitions().next().unwrap().residual, 2.5);
    }

    #[test]
    fn invalid_requests_rejected() {
        let t = line(1.0, 2);
        for bad in [
            vec![req(0, 0, &[], 1.0, 0)],
            vec![req(0, 0, &[0, 1], 1.0, 0)],
            vec![req(0, 0, &[9], 1.0, 0)],
            vec![req(0, 0, &[1], 0.0, 0)],
            vec![req(0, 0, &[1], 1.0, 0), req(0, 0, &[2], 1.0, 0)],
        ] {
            assert!(matches!(Simulation::new(&t, SimConfig::default(), bad), Err(EngineError::BadRequest { .. })));
        }
        let cfg = SimConfig { delta: 0.0, ..Default::default() };
        assert!(matches!(Simulation::new(&t, cfg, vec![]), Err(EngineError::Config(_))));
    }

    #[test]
    fn stepping_matches_run() {
        let t = Topology::<f64>::from_json_str(bundled::ANS).unwrap();
        let w = generate_workload(&WorkloadSpec { transfers: 30, seed: 3, ..Default::default() }, &t).unwrap();
        for policy in Policy::ALL {
            let cfg = SimConfig { policy, check_bookkeeping: true, ..Default::default() };
            let whole = run(&t, cfg, w.clone()).unwrap();
            let mut sim = Simulation::new(&t, cfg, w.clone()).unwrap();
            let mut delivered = 0.0;
            while !sim.is_done() {
                delivered += sim.step().unwrap().delivered;
            }
            assert_eq!(sim.report(), whole);
            assert!(sim.max_load_error() < 1e-9);
            assert_eq!(sim.link_state().consistency_alarms(), 0);
            // every partition delivers exactly its volume
            let total: f64 = sim.finished_partitions().iter().map(|p| p.volume).sum();
            assert!((delivered - total).abs() < 1e-9 * total.max(1.0));
            assert!(whole.receivers.iter().all(|r| r.completion_slot > r.arrival_slot));
            assert_eq!(sim.max_group_entries(), 0);
        }
    }
}
