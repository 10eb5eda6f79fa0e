//! Receiver-set partitioning and per-partition tree selection.
//!
//! Receivers are clustered by hop distance into a full average-linkage
//! hierarchy. Scanning from the finest allowed layer downwards, the first
//! layer whose per-cluster trees (under weights frozen at admission) weigh
//! at most `p_f` times the single tree over all receivers is accepted; its
//! trees are then recomputed one partition at a time with load commits.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::workload::{RequestId, TransferRequest};
use crate::load::{LinkState, WeightStrategy};
use crate::num::{CompensatedSum, Real};
use crate::steiner::{min_weight_steiner_tree, shortest_path_union, EdgeWeights, ForwardingTree, SteinerError};
use crate::topology::{HopDistanceMatrix, NodeId, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("partitioning factor must be positive and finite, got {0}")]
    InvalidFactor(f64),
    #[error(transparent)]
    Steiner(#[from] SteinerError),
}

/// Upper bound on the number of partitions per request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PartitionLimit {
    /// Up to one partition per receiver.
    #[default]
    Unbounded,
    AtMost(usize),
}

impl PartitionLimit {
    pub fn cap(self, receivers: usize) -> usize {
        match self {
            Self::Unbounded => receivers,
            Self::AtMost(n) => n.min(receivers),
        }
    }
}

impl fmt::Display for PartitionLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unbounded => f.write_str("all"),
            Self::AtMost(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for PartitionLimit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" | "unbounded" => Ok(Self::Unbounded),
            _ => match s.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(Self::AtMost(n)),
                _ => Err(format!("invalid partition limit {s:?} (expected \"all\" or an integer >= 1)")),
            },
        }
    }
}

impl TryFrom<String> for PartitionLimit {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<PartitionLimit> for String {
    fn from(l: PartitionLimit) -> String {
        l.to_string()
    }
}

/// One step of the agglomerative hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub merged: usize,
    pub average_distance: f64,
}

/// Full average-linkage dendrogram over a receiver set.
///
/// Cluster ids `0..n` are the singletons in ascending node order; the
/// `k`-th merge creates cluster `n + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterHierarchy {
    members: Vec<Vec<NodeId>>,
    merges: Vec<Merge>,
    leaves: usize,
}

impl ClusterHierarchy {
    pub fn receiver_count(&self) -> usize {
        self.leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn members(&self, cluster: usize) -> &[NodeId] {
        &self.members[cluster]
    }

    /// The `l` clusters of layer `l`, each sorted, ordered by first member.
    pub fn layer(&self, l: usize) -> Vec<Vec<NodeId>> {
        assert!((1..=self.leaves).contains(&l), "layer {l} outside 1..={}", self.leaves);
        let mut active: BTreeSet<usize> = (0..self.leaves).collect();
        for m in &self.merges[..self.leaves - l] {
            active.remove(&m.left);
            active.remove(&m.right);
            active.insert(m.merged);
        }
        let mut clusters: Vec<Vec<NodeId>> = active.into_iter().map(|c| self.members[c].clone()).collect();
        clusters.sort();
        clusters
    }
}

/// Average-linkage clustering of `receivers` over hop distances.
///
/// Linkages are compared exactly as rationals. Ties go to the pair with the
/// lexicographically smallest `(min id, max id)`.
pub fn build_hierarchy(receivers: &BTreeSet<NodeId>, dist: &HopDistanceMatrix) -> ClusterHierarchy {
    let leaves = receivers.len();
    let mut members: Vec<Vec<NodeId>> = receivers.iter().map(|&r| vec![r]).collect();
    let mut active: Vec<usize> = (0..leaves).collect();
    let mut merges = Vec::with_capacity(leaves.saturating_sub(1));

    let linkage = |a: &[NodeId], b: &[NodeId]| -> (u64, u64) {
        let total: u64 = a.iter().flat_map(|&x| b.iter().map(move |&y| u64::from(dist.get(x, y)))).sum();
        (total, (a.len() * b.len()) as u64)
    };

    while active.len() > 1 {
        let mut best: Option<((u64, u64), usize, usize)> = None;
        for (i, &a) in active.iter().enumerate() {
            for &b in &active[i + 1..] {
                let (lo, hi) = (a.min(b), a.max(b));
                let link = linkage(&members[lo], &members[hi]);
                let better = match best {
                    None => true,
                    Some(((bs, bn), blo, bhi)) => {
                        let lhs = u128::from(link.0) * u128::from(bn);
                        let rhs = u128::from(bs) * u128::from(link.1);
                        lhs < rhs || (lhs == rhs && (lo, hi) < (blo, bhi))
                    }
                };
                if better {
                    best = Some((link, lo, hi));
                }
            }
        }
        let ((sum, count), left, right) = best.expect("at least two active clusters");
        let merged = members.len();
        let mut union: Vec<NodeId> = members[left].iter().chain(&members[right]).copied().collect();
        union.sort();
        members.push(union);
        active.retain(|&c| c != left && c != right);
        active.push(merged);
        merges.push(Merge { left, right, merged, average_distance: sum as f64 / count as f64 });
    }
    ClusterHierarchy { members, merges, leaves }
}

/// Tree selection for one receiver group: pick a tree under the current
/// strategy weights and commit `volume` onto its edges.
pub fn compute_tree<T: Real>(
    topo: &Topology<T>,
    state: &mut LinkState<T>,
    strategy: WeightStrategy,
    source: NodeId,
    receivers: &BTreeSet<NodeId>,
    volume: T,
) -> Result<ForwardingTree<T>, SteinerError> {
    let weights = state.weights(strategy, volume);
    let tree = min_weight_steiner_tree(topo, &weights, source, receivers)?;
    state.commit_tree(&tree, volume);
    Ok(tree)
}

/// Minimum-hop path to a single receiver, committed like any other tree.
pub fn compute_min_hop_path<T: Real>(
    topo: &Topology<T>,
    state: &mut LinkState<T>,
    source: NodeId,
    receiver: NodeId,
    volume: T,
) -> Result<ForwardingTree<T>, SteinerError> {
    let unit = EdgeWeights::uniform(topo.edge_count(), T::one());
    let tree = shortest_path_union(topo, &unit, source, &BTreeSet::from([receiver]))?;
    state.commit_tree(&tree, volume);
    Ok(tree)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub factor: f64,
    pub limit: PartitionLimit,
    pub strategy: WeightStrategy,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { factor: 1.1, limit: PartitionLimit::Unbounded, strategy: WeightStrategy::LoadPlusVolume }
    }
}

/// A receiver group and the tree that serves it.
pub type Group<T> = (BTreeSet<NodeId>, ForwardingTree<T>);

/// Outcome of partitioning one request. `groups` are in commit order.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan<T> {
    pub groups: Vec<Group<T>>,
    /// `W_{T_R}` under the frozen weights.
    pub single_tree_weight: T,
    /// Frozen-weight tree weight sum of the accepted layer, or
    /// `single_tree_weight` when no layer was accepted.
    pub budget_weight_sum: T,
    pub accepted_layer: Option<usize>,
}

/// Partitions `request`'s receivers and returns one committed tree per group.
pub fn compute_partitions_and_trees<T: Real>(
    request: &TransferRequest<T>,
    topo: &Topology<T>,
    hops: &HopDistanceMatrix,
    state: &mut LinkState<T>,
    config: &PartitionConfig,
) -> Result<PartitionPlan<T>, PartitionError> {
    if !(config.factor > 0.0 && config.factor.is_finite()) {
        return Err(PartitionError::InvalidFactor(config.factor));
    }
    let frozen = state.weights(config.strategy, request.volume);
    let single = min_weight_steiner_tree(topo, &frozen, request.source, &request.receivers)?;
    let budget = T::lit(config.factor) * single.weight;

    let top = config.limit.cap(request.receivers.len());
    if top >= 2 {
        let hierarchy = build_hierarchy(&request.receivers, hops);
        for l in (2..=top).rev() {
            let clusters = hierarchy.layer(l);
            let mut sum = T::zero();
            for cluster in &clusters {
                let members: BTreeSet<NodeId> = cluster.iter().copied().collect();
                sum = sum + min_weight_steiner_tree(topo, &frozen, request.source, &members)?.weight;
                if sum > budget {
                    break;
                }
            }
            if sum <= budget {
                let groups = commit_layer(topo, state, config.strategy, request, clusters)?;
                return Ok(PartitionPlan {
                    groups,
                    single_tree_weight: single.weight,
                    budget_weight_sum: sum,
                    accepted_layer: Some(l),
                });
            }
        }
    }

    state.commit_tree(&single, request.volume);
    Ok(PartitionPlan {
        groups: vec![(request.receivers.clone(), single.clone())],
        single_tree_weight: single.weight,
        budget_weight_sum: single.weight,
        accepted_layer: None,
    })
}

/// Larger partitions commit first; equal sizes go by smallest member.
fn commit_layer<T: Real>(
    topo: &Topology<T>,
    state: &mut LinkState<T>,
    strategy: WeightStrategy,
    request: &TransferRequest<T>,
    mut clusters: Vec<Vec<NodeId>>,
) -> Result<Vec<Group<T>>, SteinerError> {
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    clusters
        .into_iter()
        .map(|cluster| {
            let members: BTreeSet<NodeId> = cluster.into_iter().collect();
            let tree = compute_tree(topo, state, strategy, request.source, &members, request.volume)?;
            Ok((members, tree))
        })
        .collect()
}

/// Runtime state of one admitted partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionState<T> {
    pub request: RequestId,
    /// Index of the partition within its request.
    pub partition: usize,
    pub receivers: BTreeSet<NodeId>,
    pub tree: ForwardingTree<T>,
    pub volume: T,
    /// `volume - delivered`, refreshed after every delivery.
    pub residual: T,
    pub delivered: CompensatedSum<T>,
    pub arrival: u64,
    pub completed_at: Option<u64>,
}

impl<T: Real> PartitionState<T> {
    pub fn new(request: &TransferRequest<T>, partition: usize, receivers: BTreeSet<NodeId>, tree: ForwardingTree<T>) -> Self {
        Self {
            request: request.id,
            partition,
            receivers,
            tree,
            volume: request.volume,
            residual: request.volume,
            delivered: CompensatedSum::new(),
            arrival: request.arrival,
            completed_at: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.completed_at.is_some()
    }

    /// Records `amount` as delivered.
    ///
    /// The residual is recomputed from the compensated delivered total rather
    /// than decremented, so it stays within an ulp of `volume - delivered`
    /// over thousands of slots.
    pub fn deliver(&mut self, amount: T) {
        self.delivered.add(amount);
        self.residual = (self.volume - self.delivered.value()).max(T::zero());
    }
}

/// Checks that `groups` are disjoint, non-empty and cover `receivers`.
pub fn is_disjoint_cover<'a>(receivers: &BTreeSet<NodeId>, groups: impl IntoIterator<Item = &'a BTreeSet<NodeId>>) -> bool {
    let mut seen = BTreeSet::new();
    for g in groups {
        if g.is_empty() {
            return false;
        }
        for &r in g {
            if !seen.insert(r) {
                return false;
            }
        }
    }
    &seen == receivers
}
