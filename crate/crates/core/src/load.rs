//! Per-edge load and utilization bookkeeping, and edge-weight strategies.
//!
//! The load of an edge is the outstanding volume committed to it divided by
//! its capacity, i.e. the time the edge needs to drain what is already
//! scheduled on it. Utilization is the fraction of capacity allocated in
//! the most recent timeslot.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::num::{CompensatedSum, Real};
use crate::steiner::{EdgeWeights, ForwardingTree};
use crate::topology::{EdgeId, Topology};

/// Edge-weight assignment used for tree selection, `w1` through `w10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(try_from = "String", into = "String")]
pub enum WeightStrategy {
    /// `1`
    Unit,
    /// `exp(U_e)`
    ExpUtilization,
    /// `exp(L_e)`
    ExpLoad,
    /// `U_e`
    Utilization,
    /// `L_e`
    Load,
    /// `L_e + V_R / C_e`
    #[default]
    LoadPlusVolume,
    /// `1 + exp(U_e) / sum exp(U)`
    UnitPlusExpUtilizationShare,
    /// `1 + exp(L_e) / sum exp(L)`
    UnitPlusExpLoadShare,
    /// `1 + U_e / sum U`
    UnitPlusUtilizationShare,
    /// `1 + L_e / sum L`
    UnitPlusLoadShare,
}

impl WeightStrategy {
    pub const ALL: [WeightStrategy; 10] = [
        Self::Unit,
        Self::ExpUtilization,
        Self::ExpLoad,
        Self::Utilization,
        Self::Load,
        Self::LoadPlusVolume,
        Self::UnitPlusExpUtilizationShare,
        Self::UnitPlusExpLoadShare,
        Self::UnitPlusUtilizationShare,
        Self::UnitPlusLoadShare,
    ];

    /// 1-based strategy number.
    pub fn number(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).unwrap() + 1
    }

    pub fn from_number(n: usize) -> Option<Self> {
        n.checked_sub(1).and_then(|i| Self::ALL.get(i).copied())
    }

    fn needs_sums(self) -> bool {
        self.number() >= 7
    }
}

impl fmt::Display for WeightStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}", self.number())
    }
}

impl FromStr for WeightStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.strip_prefix(['w', 'W'])
            .and_then(|n| n.parse().ok())
            .and_then(Self::from_number)
            .ok_or_else(|| format!("unknown weight strategy {s:?} (expected w1..w10)"))
    }
}

impl TryFrom<String> for WeightStrategy {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<WeightStrategy> for String {
    fn from(s: WeightStrategy) -> String {
        s.to_string()
    }
}

/// Network-wide sums used by the share-based strategies.
///
/// The exponential load sum is stored shifted by the maximum load so that
/// `exp(L_e) / sum exp(L)` stays finite for large loads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalSums<T> {
    pub sum_utilization: T,
    pub sum_load: T,
    pub sum_exp_utilization: T,
    pub max_load: T,
    pub sum_exp_shifted_load: T,
}

impl<T: Real> GlobalSums<T> {
    pub fn of(state: &LinkState<T>) -> Self {
        let loads: Vec<T> = (0..state.edge_count()).map(|e| state.load(EdgeId::from(e))).collect();
        let max_load = loads.iter().copied().fold(T::zero(), T::max);
        Self {
            sum_utilization: state.utilization.iter().copied().sum(),
            sum_load: loads.iter().copied().sum(),
            sum_exp_utilization: state.utilization.iter().map(|u| u.exp()).sum(),
            max_load,
            sum_exp_shifted_load: loads.iter().map(|&l| (l - max_load).exp()).sum(),
        }
    }
}

/// Per-edge capacity, outstanding volume and last-slot utilization.
#[derive(Debug, Clone)]
pub struct LinkState<T> {
    capacity: Vec<T>,
    outstanding: Vec<CompensatedSum<T>>,
    utilization: Vec<T>,
    alarms: usize,
}

impl<T: Real> LinkState<T> {
    pub fn new(topo: &Topology<T>) -> Self {
        let m = topo.edge_count();
        Self {
            capacity: topo.edges().iter().map(|e| e.capacity).collect(),
            outstanding: vec![CompensatedSum::new(); m],
            utilization: vec![T::zero(); m],
            alarms: 0,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.capacity.len()
    }

    pub fn capacity(&self, e: EdgeId) -> T {
        self.capacity[e.index()]
    }

    pub fn capacities(&self) -> &[T] {
        &self.capacity
    }

    /// `L_e`, in time units.
    pub fn load(&self, e: EdgeId) -> T {
        self.outstanding[e.index()].value() / self.capacity[e.index()]
    }

    pub fn utilization(&self, e: EdgeId) -> T {
        self.utilization[e.index()]
    }

    /// Number of drains that would have driven a load negative.
    pub fn consistency_alarms(&self) -> usize {
        self.alarms
    }

    /// Adds `volume / C_e` to the load of every tree edge.
    pub fn commit_tree(&mut self, tree: &ForwardingTree<T>, volume: T) {
        for &e in &tree.edges {
            self.outstanding[e.index()].add(volume);
        }
    }

    /// Removes `delivered / C_e` from the load of every tree edge.
    pub fn drain(&mut self, tree: &ForwardingTree<T>, delivered: T) {
        for &e in &tree.edges {
            let acc = &mut self.outstanding[e.index()];
            acc.add(-delivered);
            let left = acc.value();
            if left < T::zero() {
                if left < -T::FEASIBILITY_EPS {
                    self.alarms += 1;
                }
                acc.reset();
            }
        }
    }

    /// Sets `U_e = allocated_e / C_e`, clamped to `[0, 1]`.
    pub fn record_utilization(&mut self, allocated: &[T]) {
        for (u, (&a, &c)) in self.utilization.iter_mut().zip(allocated.iter().zip(&self.capacity)) {
            *u = (a / c).max(T::zero()).min(T::one());
        }
    }

    /// Weights for every edge under `strategy` for a request of `volume`.
    pub fn weights(&self, strategy: WeightStrategy, volume: T) -> EdgeWeights<T> {
        let sums = if strategy.needs_sums() { Some(GlobalSums::of(self)) } else { None };
        let weights = (0..self.edge_count())
            .map(|e| edge_weight(strategy, EdgeId::from(e), self, volume, sums.as_ref()))
            .collect();
        EdgeWeights::new(weights).expect("strategy weights are finite and non-negative")
    }
}

/// `exp(x)`, saturating so that a sum over all edges stays finite.
fn bounded_exp<T: Real>(x: T, edge_count: usize) -> T {
    let ceiling = T::max_value() / T::from_usize(edge_count + 1).unwrap();
    x.exp().min(ceiling)
}

fn share<T: Real>(x: T, total: T) -> T {
    if total > T::zero() {
        x / total
    } else {
        T::zero()
    }
}

/// Weight of edge `e` under `strategy`.
///
/// `sums` must be provided for strategies 7-10. A zero denominator in
/// strategies 9 and 10 makes the share term zero.
pub fn edge_weight<T: Real>(
    strategy: WeightStrategy,
    e: EdgeId,
    state: &LinkState<T>,
    request_volume: T,
    sums: Option<&GlobalSums<T>>,
) -> T {
    let m = state.edge_count();
    let u = state.utilization(e);
    let l = state.load(e);
    let sums = || sums.expect("global sums required for share-based strategies");
    match strategy {
        WeightStrategy::Unit => T::one(),
        WeightStrategy::ExpUtilization => bounded_exp(u, m),
        WeightStrategy::ExpLoad => bounded_exp(l, m),
        WeightStrategy::Utilization => u,
        WeightStrategy::Load => l,
        WeightStrategy::LoadPlusVolume => l + request_volume / state.capacity(e),
        WeightStrategy::UnitPlusExpUtilizationShare => {
            T::one() + share(u.exp(), sums().sum_exp_utilization)
        }
        WeightStrategy::UnitPlusExpLoadShare => {
            let s = sums();
            T::one() + share((l - s.max_load).exp(), s.sum_exp_shifted_load)
        }
        WeightStrategy::UnitPlusUtilizationShare => T::one() + share(u, sums().sum_utilization),
        WeightStrategy::UnitPlusLoadShare => T::one() + share(l, sums().sum_load),
    }
}

/// `L_e` recomputed from scratch: `(1 / C_e) * sum of residuals of trees on e`.
pub fn link_load<'a, T: Real + 'a>(
    state: &LinkState<T>,
    e: EdgeId,
    partitions: impl IntoIterator<Item = (&'a ForwardingTree<T>, T)>,
) -> T {
    let total: T = partitions
        .into_iter()
        .filter(|(tree, _)| tree.contains_edge(e))
        .map(|(_, residual)| residual)
        .sum();
    total / state.capacity(e)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::topology::{LinkRecord, NodeId, TopologyFile};

    fn pair(capacity: f64) -> Topology<f64> {
        Topology::from_file(
            TopologyFile {
                name: "p".into(),
                capacity_unit: String::new(),
                nodes: vec!["a".into(), "b".into(), "c".into()],
                links: vec![
                    LinkRecord { a: "a".into(), b: "b".into(), capacity },
                    LinkRecord { a: "b".into(), b: "c".into(), capacity: 1.0 },
                ],
            },
            false,
        )
        .unwrap()
    }

    fn tree_on(edges: &[u32], topo: &Topology<f64>) -> ForwardingTree<f64> {
        let w = EdgeWeights::uniform(topo.edge_count(), 1.0);
        let dst = topo.edge(EdgeId(*edges.last().unwrap())).dst;
        ForwardingTree::new(NodeId(0), BTreeSet::from([dst]), edges.iter().map(|&e| EdgeId(e)).collect(), &w)
            .unwrap()
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in WeightStrategy::ALL {
            assert_eq!(s.to_string().parse::<WeightStrategy>().unwrap(), s);
        }
        assert_eq!(WeightStrategy::default(), WeightStrategy::LoadPlusVolume);
        assert_eq!("w6".parse::<WeightStrategy>().unwrap().number(), 6);
        assert!("w11".parse::<WeightStrategy>().is_err());
        assert!("x1".parse::<WeightStrategy>().is_err());
    }

    #[test]
    fn unit_weight_is_one() {
        let t = pair(1.0);
        let s = LinkState::new(&t);
        assert_eq!(edge_weight(WeightStrategy::Unit, EdgeId(0), &s, 5.0, None), 1.0);
    }

    #[test]
    fn load_plus_volume_formula() {
        let t = pair(2.0);
        let mut s = LinkState::new(&t);
        let tree = tree_on(&[0], &t);
        // L_e = 10 / 2 = 5
        s.commit_tree(&tree, 10.0);
        assert_eq!(s.load(EdgeId(0)), 5.0);
        assert_eq!(edge_weight(WeightStrategy::LoadPlusVolume, EdgeId(0), &s, 10.0, None), 10.0);
    }

    #[test]
    fn exp_load_share_at_zero_load() {
        // 50 directed edges, all unloaded
        let links: Vec<LinkRecord> =
            (0..25).map(|i| LinkRecord { a: format!("n{i}"), b: format!("n{}", i + 1), capacity: 1.0 }).collect();
        let t = Topology::<f64>::from_file(
            TopologyFile {
                name: "l".into(),
                capacity_unit: String::new(),
                nodes: (0..26).map(|i| format!("n{i}")).collect(),
                links,
            },
            true,
        )
        .unwrap();
        let s = LinkState::new(&t);
        let w = s.weights(WeightStrategy::UnitPlusExpLoadShare, 1.0);
        assert_eq!(w.len(), 50);
        assert!((w[EdgeId(3)] - 1.02).abs() < 1e-15);
    }

    #[test]
    fn share_guards_zero_denominator() {
        let t = pair(1.0);
        let s = LinkState::new(&t);
        for strat in [WeightStrategy::UnitPlusUtilizationShare, WeightStrategy::UnitPlusLoadShare] {
            assert_eq!(s.weights(strat, 3.0)[EdgeId(1)], 1.0);
        }
    }

    #[test]
    fn commit_scales_by_capacity_and_drain_restores() {
        let t = pair(0.5);
        let mut s = LinkState::new(&t);
        let tree = tree_on(&[0], &t);
        s.commit_tree(&tree, 20.0);
        assert_eq!(s.load(EdgeId(0)), 40.0);
        s.commit_tree(&tree, 20.0);
        assert_eq!(s.load(EdgeId(0)), 80.0);
        assert_eq!(link_load(&s, EdgeId(0), [(&tree, 20.0), (&tree, 20.0)]), 80.0);
        s.drain(&tree, 20.0);
        s.drain(&tree, 20.0);
        assert_eq!(s.load(EdgeId(0)), 0.0);
        assert_eq!(s.consistency_alarms(), 0);
        s.drain(&tree, 1.0);
        assert_eq!(s.load(EdgeId(0)), 0.0);
        assert_eq!(s.consistency_alarms(), 1);
    }

    #[test]
    fn utilization_is_allocated_fraction() {
        let t = pair(0.5);
        let mut s = LinkState::new(&t);
        s.record_utilization(&[0.5, 0.25, 1.0, 0.0]);
        assert_eq!(s.utilization(EdgeId(0)), 1.0);
        assert_eq!(s.utilization(EdgeId(1)), 0.5);
        assert_eq!(s.utilization(EdgeId(2)), 1.0);
    }

    #[test]
    fn exp_load_saturates_instead_of_overflowing() {
        let t = pair(1e-3);
        let mut s = LinkState::new(&t);
        s.commit_tree(&tree_on(&[0], &t), 10.0);
        assert_eq!(s.load(EdgeId(0)), 10_000.0);
        for strat in WeightStrategy::ALL {
            let w = s.weights(strat, 1.0);
            assert!(w.as_slice().iter().all(|x| x.is_finite()), "{strat}");
        }
        let w = s.weights(WeightStrategy::UnitPlusExpLoadShare, 1.0);
        assert!((w[EdgeId(0)] - 2.0).abs() < 1e-12);
    }
}
