//! Per-timeslot rate allocation over forwarding trees.
//!
//! A tree is one flow that consumes its rate on every edge it covers. Rates
//! are capped by the demand `V_P^r / delta` so no partition is handed more
//! than it can still deliver in the slot.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::load::LinkState;
use crate::num::Real;
use crate::partition::PartitionState;
use crate::topology::EdgeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Policy {
    #[default]
    MaxMin,
    Srpt,
    Fcfs,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::MaxMin, Policy::Srpt, Policy::Fcfs];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::MaxMin => "maxmin",
            Self::Srpt => "srpt",
            Self::Fcfs => "fcfs",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown policy {s:?} (expected maxmin, srpt or fcfs)"))
    }
}

impl TryFrom<String> for Policy {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Policy> for String {
    fn from(p: Policy) -> String {
        p.to_string()
    }
}

/// A flow to be scheduled: the edges it occupies and its rate cap.
#[derive(Debug, Clone, Copy)]
pub struct FlowSpec<'a, T> {
    pub edges: &'a [EdgeId],
    pub demand: T,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("edge {edge} carries {load} but has capacity {capacity}")]
    CapacityExceeded { edge: usize, load: f64, capacity: f64 },
    #[error("flow {flow} gets rate {rate} above its demand {demand}")]
    DemandExceeded { flow: usize, rate: f64, demand: f64 },
    #[error("flow {flow} has invalid rate {rate}")]
    InvalidRate { flow: usize, rate: f64 },
}

/// Max-min fair rates with demand caps, by progressive filling.
///
/// All unfrozen flows share one water level. Each round raises the level to
/// the next event: an edge running out of room or a flow reaching its
/// demand. The edges and flows that define the event are frozen exactly,
/// which keeps rounding from leaking capacity.
pub fn max_min_fair<T: Real>(capacity: &[T], flows: &[FlowSpec<'_, T>]) -> Vec<T> {
    let mut rate = vec![T::zero(); flows.len()];
    let mut frozen: Vec<bool> = flows.iter().map(|f| f.demand <= T::zero()).collect();
    // room left on each edge above the current level of its unfrozen flows
    let mut room = capacity.to_vec();
    let mut sharing = vec![0usize; capacity.len()];
    for (f, flow) in flows.iter().enumerate() {
        if !frozen[f] {
            for &e in flow.edges {
                sharing[e.index()] += 1;
            }
        }
    }
    let mut level = T::zero();

    while frozen.iter().any(|&z| !z) {
        let edge_step = (0..room.len())
            .filter(|&e| sharing[e] > 0)
            .map(|e| (room[e] / T::from_usize(sharing[e]).unwrap()).max(T::zero()))
            .fold(None, |acc: Option<T>, s| Some(acc.map_or(s, |a| a.min(s))));
        let demand_step = (0..flows.len())
            .filter(|&f| !frozen[f])
            .map(|f| (flows[f].demand - level).max(T::zero()))
            .fold(None, |acc: Option<T>, s| Some(acc.map_or(s, |a| a.min(s))));
        let step = match (edge_step, demand_step) {
            (Some(a), Some(b)) => a.min(b),
            (a, b) => a.or(b).unwrap(),
        };

        let saturated: Vec<usize> = (0..room.len())
            .filter(|&e| sharing[e] > 0 && room[e] / T::from_usize(sharing[e]).unwrap() <= step)
            .collect();
        for e in 0..room.len() {
            if sharing[e] > 0 {
                room[e] = room[e] - step * T::from_usize(sharing[e]).unwrap();
            }
        }
        level = level + step;
        for &e in &saturated {
            room[e] = T::zero();
        }

        for f in 0..flows.len() {
            if frozen[f] {
                continue;
            }
            let capped = flows[f].demand - level <= T::zero();
            let blocked = flows[f].edges.iter().any(|e| saturated.binary_search(&e.index()).is_ok());
            if capped || blocked {
                frozen[f] = true;
                rate[f] = if capped { flows[f].demand } else { level };
                for &e in flows[f].edges {
                    sharing[e.index()] -= 1;
                    if capped {
                        // a capped flow took its demand, not the whole level
                        room[e.index()] = room[e.index()] + (level - flows[f].demand);
                    }
                }
            }
        }
    }
    clamp_tiny(&mut rate);
    rate
}

/// Strict-priority allocation: each flow in `order` takes as much as its
/// demand and the remaining edge capacity allow.
pub fn strict_priority<T: Real>(capacity: &[T], flows: &[FlowSpec<'_, T>], order: &[usize]) -> Vec<T> {
    let mut room = capacity.to_vec();
    let mut rate = vec![T::zero(); flows.len()];
    for &f in order {
        let bottleneck = flows[f].edges.iter().map(|e| room[e.index()]).fold(flows[f].demand, T::min);
        let r = bottleneck.max(T::zero());
        for &e in flows[f].edges {
            room[e.index()] = (room[e.index()] - r).max(T::zero());
        }
        rate[f] = r;
    }
    clamp_tiny(&mut rate);
    rate
}

fn clamp_tiny<T: Real>(rate: &mut [T]) {
    for r in rate {
        if *r < T::RATE_EPS {
            *r = T::zero();
        }
    }
}

/// Priority order of `partitions` under `policy` (ignored for max-min).
///
/// SRPT ranks by partition residual, FCFS by arrival slot; ties go to the
/// lower request id, then the lower partition index.
pub fn priority_order<T: Real>(policy: Policy, partitions: &[&PartitionState<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..partitions.len()).collect();
    let ids = |p: &PartitionState<T>| (p.request, p.partition);
    order.sort_by(|&a, &b| {
        let (pa, pb) = (partitions[a], partitions[b]);
        let primary = match policy {
            Policy::MaxMin => Ordering::Equal,
            Policy::Srpt => pa.residual.partial_cmp(&pb.residual).unwrap_or(Ordering::Equal),
            Policy::Fcfs => pa.arrival.cmp(&pb.arrival),
        };
        primary.then(ids(pa).cmp(&ids(pb)))
    });
    order
}

/// Rates for the active partitions under `policy`.
pub fn allocate<T: Real>(policy: Policy, capacity: &[T], active: &[&PartitionState<T>], delta: T) -> Vec<T> {
    let flows: Vec<FlowSpec<'_, T>> =
        active.iter().map(|p| FlowSpec { edges: &p.tree.edges, demand: p.residual / delta }).collect();
    match policy {
        Policy::MaxMin => max_min_fair(capacity, &flows),
        Policy::Srpt | Policy::Fcfs => strict_priority(capacity, &flows, &priority_order(policy, active)),
    }
}

/// Rejects allocations that overload an edge or over-serve a flow.
pub fn check_feasibility<T: Real>(capacity: &[T], flows: &[FlowSpec<'_, T>], rates: &[T]) -> Result<(), ScheduleError> {
    let mut load = vec![T::zero(); capacity.len()];
    for (f, (flow, &r)) in flows.iter().zip(rates).enumerate() {
        if !(r.is_finite() && r >= T::zero()) {
            return Err(ScheduleError::InvalidRate { flow: f, rate: r.as_f64() });
        }
        if r > flow.demand + T::FEASIBILITY_EPS {
            return Err(ScheduleError::DemandExceeded { flow: f, rate: r.as_f64(), demand: flow.demand.as_f64() });
        }
        for &e in flow.edges {
            load[e.index()] = load[e.index()] + r;
        }
    }
    for (e, (&l, &c)) in load.iter().zip(capacity).enumerate() {
        if l > c + T::FEASIBILITY_EPS {
            return Err(ScheduleError::CapacityExceeded { edge: e, load: l.as_f64(), capacity: c.as_f64() });
        }
    }
    Ok(())
}

/// Result of applying one slot's rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDelivery<T> {
    /// Volume delivered per partition, aligned with the input.
    pub delivered: Vec<T>,
    /// Positions (in the input) of partitions that finished this slot.
    pub completed: Vec<usize>,
}

/// Delivers `rate * delta` on every partition, drains link loads, records
/// utilization and marks partitions whose residual hits zero as completed
/// at `slot_end`.
pub fn apply_allocation<T: Real>(
    state: &mut LinkState<T>,
    active: &mut [&mut PartitionState<T>],
    rates: &[T],
    delta: T,
    slot_end: u64,
) -> SlotDelivery<T> {
    let mut allocated = vec![T::zero(); state.edge_count()];
    let mut delivered = Vec::with_capacity(active.len());
    let mut completed = Vec::new();
    for (i, (p, &r)) in active.iter_mut().zip(rates).enumerate() {
        for &e in &p.tree.edges {
            allocated[e.index()] = allocated[e.index()] + r;
        }
        let mut amount = (r * delta).min(p.residual);
        if p.residual - amount <= T::COMPLETION_EPS {
            amount = p.residual;
        }
        let finishing = amount == p.residual;
        if amount > T::zero() {
            state.drain(&p.tree, amount);
            p.deliver(amount);
        }
        if finishing {
            p.residual = T::zero();
            p.completed_at = Some(slot_end);
            completed.push(i);
        }
        delivered.push(amount);
    }
    state.record_utilization(&allocated);
    SlotDelivery { delivered, completed }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(edges: &[u32]) -> Vec<EdgeId> {
        edges.iter().map(|&e| EdgeId(e)).collect()
    }

    #[test]
    fn policy_names() {
        for p in Policy::ALL {
            assert_eq!(p.to_string().parse::<Policy>().unwrap(), p);
        }
        assert!("lifo".parse::<Policy>().is_err());
    }

    #[test]
    fn motivating_rates() {
        // edge 0: source link (10); edge 1: slow branch (1); edge 2: fast branch (10)
        let cap = [10.0, 1.0, 10.0];
        let (a, b) = (ids(&[0, 1]), ids(&[0, 2]));
        let flows = [FlowSpec { edges: &a, demand: 100.0 }, FlowSpec { edges: &b, demand: 100.0 }];
        assert_eq!(max_min_fair(&cap, &flows), vec![1.0, 9.0]);
    }

    #[test]
    fn symmetric_share() {
        let e = ids(&[0]);
        let flows = [FlowSpec { edges: &e, demand: f64::INFINITY }, FlowSpec { edges: &e, demand: f64::INFINITY }];
        assert_eq!(max_min_fair(&[1.0], &flows), vec![0.5, 0.5]);
    }

    #[test]
    fn demand_cap_frees_capacity() {
        let e = ids(&[0]);
        assert_eq!(max_min_fair(&[1.0], &[FlowSpec { edges: &e, demand: 0.3 }]), vec![0.3]);
        let flows = [FlowSpec { edges: &e, demand: 0.2 }, FlowSpec { edges: &e, demand: 5.0 }];
        assert_eq!(max_min_fair(&[1.0], &flows), vec![0.2, 0.8]);
    }

    #[test]
    fn zero_demand_gets_nothing() {
        let e = ids(&[0]);
        let flows = [FlowSpec { edges: &e, demand: 0.0 }, FlowSpec { edges: &e, demand: 5.0 }];
        assert_eq!(max_min_fair(&[1.0], &flows), vec![0.0, 1.0]);
    }

    #[test]
    fn strict_priority_first_takes_all() {
        let e = ids(&[0]);
        let flows = [FlowSpec { edges: &e, demand: 5.0 }, FlowSpec { edges: &e, demand: 10.0 }];
        assert_eq!(strict_priority(&[1.0], &flows, &[0, 1]), vec![1.0, 0.0]);
        let (a, b) = (ids(&[0]), ids(&[1]));
        let flows = [FlowSpec { edges: &a, demand: 5.0 }, FlowSpec { edges: &b, demand: 5.0 }];
        assert_eq!(strict_priority(&[1.0, 0.7], &flows, &[1, 0]), vec![1.0, 0.7]);
    }

    #[test]
    fn feasibility_violations_reported() {
        let e = ids(&[0]);
        let flows = [FlowSpec { edges: &e, demand: 5.0 }];
        assert!(check_feasibility(&[1.0], &flows, &[1.0]).is_ok());
        assert!(matches!(check_feasibility(&[1.0], &flows, &[1.5]), Err(ScheduleError::CapacityExceeded { .. })));
        let flows = [FlowSpec { edges: &e, demand: 0.5 }];
        assert!(matches!(check_feasibility(&[1.0], &flows, &[0.7]), Err(ScheduleError::DemandExceeded { .. })));
        assert!(matches!(check_feasibility(&[1.0], &flows, &[f64::NAN]), Err(ScheduleError::InvalidRate { .. })));
    }
}
