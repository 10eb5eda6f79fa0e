//! Exact directed Steiner tree by exhaustive parent assignment.
//!
//! Every arborescence is described by choosing, for each non-root node,
//! either no parent or one incoming edge. The search enumerates these
//! choices with branch-and-bound on the accumulated weight and keeps the
//! lightest assignment in which every terminal walks up to the root.

use std::collections::BTreeSet;

use super::{check_request, EdgeWeights, ForwardingTree, SteinerError};
use crate::num::Real;
use crate::topology::{EdgeId, NodeId, Topology};

pub const EXHAUSTIVE_MAX_NODES: usize = 10;
pub const EXHAUSTIVE_MAX_EDGES: usize = 12;

pub fn brute_force_steiner<T: Real>(
    topo: &Topology<T>,
    weights: &EdgeWeights<T>,
    root: NodeId,
    terminals: &BTreeSet<NodeId>,
) -> Result<ForwardingTree<T>, SteinerError> {
    check_request(topo, weights, root, terminals)?;
    if topo.node_count() > EXHAUSTIVE_MAX_NODES && topo.edge_count() > EXHAUSTIVE_MAX_EDGES {
        return Err(SteinerError::TooLarge { nodes: topo.node_count(), edges: topo.edge_count() });
    }

    let order: Vec<NodeId> = topo.node_ids().filter(|&v| v != root).collect();
    let choices: Vec<Vec<EdgeId>> = order
        .iter()
        .map(|&v| {
            let mut incoming = topo.in_edges(v).to_vec();
            incoming.sort_by(|&a, &b| weights[a].partial_cmp(&weights[b]).unwrap().then(a.cmp(&b)));
            incoming
        })
        .collect();

    let mut search = Search {
        topo,
        weights,
        root,
        terminals,
        order: &order,
        choices: &choices,
        parent: vec![None; topo.node_count()],
        best: None,
    };
    search.descend(0, T::zero());
    let (_, edges) = search
        .best
        .ok_or_else(|| SteinerError::Unreachable(*terminals.iter().next().unwrap()))?;
    ForwardingTree::new(root, terminals.clone(), edges, weights)
}

struct Search<'a, T> {
    topo: &'a Topology<T>,
    weights: &'a EdgeWeights<T>,
    root: NodeId,
    terminals: &'a BTreeSet<NodeId>,
    order: &'a [NodeId],
    choices: &'a [Vec<EdgeId>],
    parent: Vec<Option<EdgeId>>,
    best: Option<(T, Vec<EdgeId>)>,
}

impl<T: Real> Search<'_, T> {
    fn bound(&self) -> Option<T> {
        self.best.as_ref().map(|(w, _)| *w)
    }

    fn descend(&mut self, depth: usize, cost: T) {
        if self.bound().is_some_and(|b| cost >= b) {
            return;
        }
        if depth == self.order.len() {
            self.evaluate();
            return;
        }
        let node = self.order[depth];
        if !self.terminals.contains(&node) {
            self.parent[node.index()] = None;
            self.descend(depth + 1, cost);
        }
        for &e in &self.choices[depth] {
            self.parent[node.index()] = Some(e);
            self.descend(depth + 1, cost + self.weights[e]);
        }
        self.parent[node.index()] = None;
    }

    fn evaluate(&mut self) {
        let mut used = BTreeSet::new();
        for &t in self.terminals {
            let mut cur = t;
            let mut steps = 0;
            while cur != self.root {
                let Some(e) = self.parent[cur.index()] else { return };
                steps += 1;
                if steps > self.order.len() {
                    return;
                }
                used.insert(e);
                cur = self.topo.edge(e).src;
            }
        }
        let weight: T = used.iter().map(|&e| self.weights[e]).sum();
        if self.bound().is_none_or(|b| weight < b) {
            self.best = Some((weight, used.into_iter().collect()));
        }
    }
}
