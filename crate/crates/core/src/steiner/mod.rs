//! Directed Steiner trees under arbitrary non-negative edge weights.
//!
//! [`min_weight_steiner_tree`] runs a GreedyFLAC-style heuristic and also
//! builds the union of per-terminal shortest paths; the lighter of the two
//! is returned, so the result never weighs more than the shortest-path
//! union. [`brute_force_steiner`] is an exact search for small graphs.

mod exhaustive;
mod greedy_flac;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::num::Real;
use crate::topology::{EdgeId, NodeId, Topology};

pub use exhaustive::{brute_force_steiner, EXHAUSTIVE_MAX_EDGES, EXHAUSTIVE_MAX_NODES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteinerError {
    #[error("terminal set is empty")]
    NoTerminals,
    #[error("root {0} is also listed as a terminal")]
    RootIsTerminal(NodeId),
    #[error("node {0} is not in the topology")]
    UnknownNode(NodeId),
    #[error("expected {expected} edge weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("edge weight {value} on edge {edge} is not finite and non-negative")]
    InvalidWeight { edge: usize, value: f64 },
    #[error("terminal {0} is unreachable from the root")]
    Unreachable(NodeId),
    #[error("instance too large for exhaustive search ({nodes} nodes, {edges} edges)")]
    TooLarge { nodes: usize, edges: usize },
    #[error("no weight for edge {}", .0.index())]
    MissingWeight(EdgeId),
}

/// Per-edge weights, indexed by [`EdgeId`]. All values are finite and `>= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights<T>(Vec<T>);

impl<T: Real> EdgeWeights<T> {
    pub fn new(weights: Vec<T>) -> Result<Self, SteinerError> {
        if let Some((edge, w)) =
            weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= T::zero()))
        {
            return Err(SteinerError::InvalidWeight { edge, value: w.as_f64() });
        }
        Ok(Self(weights))
    }

    pub fn uniform(edge_count: usize, w: T) -> Self {
        Self(vec![w; edge_count])
    }

    pub fn get(&self, e: EdgeId) -> Option<T> {
        self.0.get(e.index()).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

impl<T> std::ops::Index<EdgeId> for EdgeWeights<T> {
    type Output = T;
    fn index(&self, e: EdgeId) -> &T {
        &self.0[e.index()]
    }
}

/// A pruned arborescence from `root` reaching every terminal.
///
/// `edges` is kept sorted; `weight` is the sum of the weights the tree was
/// selected under.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardingTree<T> {
    pub root: NodeId,
    pub terminals: BTreeSet<NodeId>,
    pub edges: Vec<EdgeId>,
    pub weight: T,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeDefect {
    #[error("edge {0} is not in the topology")]
    UnknownEdge(usize),
    #[error("node {0} has more than one incoming tree edge")]
    MultipleParents(NodeId),
    #[error("root has an incoming tree edge")]
    RootHasParent,
    #[error("tree edges contain a cycle or a detached component at {0}")]
    Detached(NodeId),
    #[error("terminal {0} is not reached")]
    TerminalMissing(NodeId),
    #[error("non-terminal leaf {0}")]
    UnprunedLeaf(NodeId),
}

impl<T: Real> ForwardingTree<T> {
    pub fn new(
        root: NodeId,
        terminals: BTreeSet<NodeId>,
        mut edges: Vec<EdgeId>,
        weights: &EdgeWeights<T>,
    ) -> Result<Self, SteinerError> {
        edges.sort_unstable();
        edges.dedup();
        let mut tree = Self { root, terminals, edges, weight: T::zero() };
        tree.weight = tree_weight(&tree, weights)?;
        Ok(tree)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_edge(&self, e: EdgeId) -> bool {
        self.edges.binary_search(&e).is_ok()
    }

    /// Every node touched by the tree, root included.
    pub fn nodes(&self, topo: &Topology<T>) -> BTreeSet<NodeId> {
        let mut nodes = BTreeSet::from([self.root]);
        nodes.extend(self.edges.iter().map(|&e| topo.edge(e).dst));
        nodes
    }

    /// Out-degree of every node that has at least one outgoing tree edge.
    pub fn out_degrees(&self, topo: &Topology<T>) -> BTreeMap<NodeId, usize> {
        let mut deg = BTreeMap::new();
        for &e in &self.edges {
            *deg.entry(topo.edge(e).src).or_insert(0) += 1;
        }
        deg
    }

    /// Checks the arborescence, reachability and pruning invariants.
    pub fn validate(&self, topo: &Topology<T>) -> Result<(), TreeDefect> {
        let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for &e in &self.edges {
            if e.index() >= topo.edge_count() {
                return Err(TreeDefect::UnknownEdge(e.index()));
            }
            let edge = topo.edge(e);
            if edge.dst == self.root {
                return Err(TreeDefect::RootHasParent);
            }
            if parent.insert(edge.dst, edge.src).is_some() {
                return Err(TreeDefect::MultipleParents(edge.dst));
            }
        }
        // every tree node must walk up to the root within |parent| steps
        for &start in parent.keys() {
            let mut cur = start;
            let mut steps = 0;
            while cur != self.root {
                match parent.get(&cur) {
                    Some(&p) if steps <= parent.len() => {
                        cur = p;
                        steps += 1;
                    }
                    _ => return Err(TreeDefect::Detached(start)),
                }
            }
        }
        for &t in &self.terminals {
            if !parent.contains_key(&t) {
                return Err(TreeDefect::TerminalMissing(t));
            }
        }
        let degrees = self.out_degrees(topo);
        for &node in parent.keys() {
            if !degrees.contains_key(&node) && !self.terminals.contains(&node) {
                return Err(TreeDefect::UnprunedLeaf(node));
            }
        }
        Ok(())
    }
}

/// Sum of the weights of the tree's edges.
pub fn tree_weight<T: Real>(tree: &ForwardingTree<T>, weights: &EdgeWeights<T>) -> Result<T, SteinerError> {
    tree.edges
        .iter()
        .map(|&e| weights.get(e).ok_or(SteinerError::MissingWeight(e)))
        .sum()
}

fn check_request<T: Real>(
    topo: &Topology<T>,
    weights: &EdgeWeights<T>,
    root: NodeId,
    terminals: &BTreeSet<NodeId>,
) -> Result<(), SteinerError> {
    if weights.len() != topo.edge_count() {
        return Err(SteinerError::WeightCount { expected: topo.edge_count(), got: weights.len() });
    }
    if terminals.is_empty() {
        return Err(SteinerError::NoTerminals);
    }
    if let Some(&bad) = std::iter::once(&root).chain(terminals).find(|n| !topo.contains_node(**n)) {
        return Err(SteinerError::UnknownNode(bad));
    }
    if terminals.contains(&root) {
        return Err(SteinerError::RootIsTerminal(root));
    }
    Ok(())
}

/// Single-source shortest paths with deterministic parents.
///
/// Among equal-distance predecessors the edge with the lower source index
/// wins. Weights may be zero.
#[derive(Debug, Clone)]
pub struct ShortestPaths<T> {
    pub dist: Vec<Option<T>>,
    pub parent: Vec<Option<EdgeId>>,
}

pub fn shortest_paths<T: Real>(topo: &Topology<T>, weights: &EdgeWeights<T>, root: NodeId) -> ShortestPaths<T> {
    let n = topo.node_count();
    let mut dist: Vec<Option<T>> = vec![None; n];
    let mut parent: Vec<Option<EdgeId>> = vec![None; n];
    let mut done = vec![false; n];
    dist[root.index()] = Some(T::zero());
    loop {
        // O(V^2) selection; ties go to the lower node index
        let next = (0..n)
            .filter(|&v| !done[v])
            .filter_map(|v| dist[v].map(|d| (v, d)))
            .fold(None, |best: Option<(usize, T)>, (v, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((v, d)),
            });
        let Some((u, du)) = next else { break };
        done[u] = true;
        for &e in topo.out_edges(NodeId::from(u)) {
            let v = topo.edge(e).dst.index();
            if done[v] {
                continue;
            }
            let cand = du + weights[e];
            let better = match (dist[v], parent[v]) {
                (None, _) => true,
                (Some(dv), Some(pe)) => cand < dv || (cand == dv && topo.edge(e).src < topo.edge(pe).src),
                (Some(dv), None) => cand < dv,
            };
            if better {
                dist[v] = Some(cand);
                parent[v] = Some(e);
            }
        }
    }
    ShortestPaths { dist, parent }
}

/// Union of the shortest paths from `root` to each terminal.
///
/// The paths come from one shortest-path tree, so the union is already an
/// arborescence whose leaves are terminals.
pub fn shortest_path_union<T: Real>(
    topo: &Topology<T>,
    weights: &EdgeWeights<T>,
    root: NodeId,
    terminals: &BTreeSet<NodeId>,
) -> Result<ForwardingTree<T>, SteinerError> {
    check_request(topo, weights, root, terminals)?;
    let sp = shortest_paths(topo, weights, root);
    let mut edges = BTreeSet::new();
    for &t in terminals {
        if sp.dist[t.index()].is_none() {
            return Err(SteinerError::Unreachable(t));
        }
        let mut cur = t;
        while let Some(e) = sp.parent[cur.index()] {
            if !edges.insert(e) {
                break;
            }
            cur = topo.edge(e).src;
        }
    }
    ForwardingTree::new(root, terminals.clone(), edges.into_iter().collect(), weights)
}

/// Low-weight directed Steiner tree from `root` to `terminals`.
///
/// Never heavier than [`shortest_path_union`]; with a single terminal the
/// result is a shortest path. Deterministic for identical inputs.
pub fn min_weight_steiner_tree<T: Real>(
    topo: &Topology<T>,
    weights: &EdgeWeights<T>,
    root: NodeId,
    terminals: &BTreeSet<NodeId>,
) -> Result<ForwardingTree<T>, SteinerError> {
    check_request(topo, weights, root, terminals)?;
    let fallback = shortest_path_union(topo, weights, root, terminals)?;
    if terminals.len() == 1 {
        return Ok(fallback);
    }
    let terminal_list: Vec<NodeId> = terminals.iter().copied().collect();
    let flac_edges = greedy_flac::greedy_flac(topo, weights, root, &terminal_list)?;
    let heuristic = ForwardingTree::new(root, terminals.clone(), flac_edges, weights)?;
    debug_assert_eq!(heuristic.validate(topo), Ok(()));
    if heuristic.weight <= fallback.weight {
        Ok(heuristic)
    } else {
        Ok(fallback)
    }
}
