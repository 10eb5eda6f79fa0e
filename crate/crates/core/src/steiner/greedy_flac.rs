//! GreedyFLAC (Watel & Weisser) over a contracted partial tree.
//!
//! Each uncovered terminal pours water backwards into its incoming arcs at
//! one unit per unit time; an arc of weight `w` saturates once it holds `w`
//! units. A node fed by `k` terminals fills each of its incoming arcs at
//! rate `k`, so all unsaturated incoming arcs of a node hold the same amount
//! and saturate in weight order. A saturation that would let a terminal's
//! water reach one node along two paths (degenerate flow) is rejected and
//! the arc is marked.
//!
//! The first arc to saturate from the current tree closes one FLAC round:
//! the saturated arcs below it join the tree and the terminals feeding it
//! are covered. Rounds repeat until every terminal is covered. Treating the
//! whole partial tree as the root is equivalent to zeroing the weights of
//! already chosen arcs between rounds.

use fixedbitset::FixedBitSet;

use super::{EdgeWeights, SteinerError};
use crate::num::Real;
use crate::topology::{EdgeId, NodeId, Topology};

struct Flow<T> {
    /// Terminals whose water reaches each node.
    feeding: Vec<FixedBitSet>,
    /// Water held by each unsaturated incoming arc of a node.
    fill: Vec<T>,
    saturated: FixedBitSet,
    /// Saturated or rejected arcs.
    closed: FixedBitSet,
}

pub(super) fn greedy_flac<T: Real>(
    topo: &Topology<T>,
    weights: &EdgeWeights<T>,
    root: NodeId,
    terminals: &[NodeId],
) -> Result<Vec<EdgeId>, SteinerError> {
    let n = topo.node_count();
    let m = topo.edge_count();
    let mut in_tree = vec![false; n];
    in_tree[root.index()] = true;
    let mut covered = FixedBitSet::with_capacity(terminals.len());
    let mut tree_edges = Vec::new();

    while covered.count_ones(..) < terminals.len() {
        let mut flow = Flow {
            feeding: vec![FixedBitSet::with_capacity(terminals.len()); n],
            fill: vec![T::zero(); n],
            saturated: FixedBitSet::with_capacity(m),
            closed: FixedBitSet::with_capacity(m),
        };
        for (ix, t) in terminals.iter().enumerate() {
            if !covered.contains(ix) {
                flow.feeding[t.index()].insert(ix);
            }
        }

        loop {
            let Some((edge, dt)) = next_saturation(topo, weights, &in_tree, &flow) else {
                let missing = covered.zeroes().next().map(|ix| terminals[ix]).unwrap_or(root);
                return Err(SteinerError::Unreachable(missing));
            };
            for v in 0..n {
                let rate = flow.feeding[v].count_ones(..);
                if rate > 0 {
                    flow.fill[v] = flow.fill[v] + dt * T::from_usize(rate).unwrap();
                }
            }
            let (u, v) = (topo.edge(edge).src, topo.edge(edge).dst);
            flow.fill[v.index()] = weights[edge];
            flow.closed.insert(edge.index());

            if in_tree[u.index()] {
                covered.union_with(&flow.feeding[v.index()]);
                tree_edges.push(edge);
                let mut stack = vec![v];
                while let Some(x) = stack.pop() {
                    in_tree[x.index()] = true;
                    for &e in topo.out_edges(x) {
                        if flow.saturated.contains(e.index()) {
                            tree_edges.push(e);
                            stack.push(topo.edge(e).dst);
                        }
                    }
                }
                break;
            }

            let upstream = upstream_of(topo, &flow.saturated, u);
            let incoming = flow.feeding[v.index()].clone();
            if upstream.iter().any(|x| !flow.feeding[x.index()].is_disjoint(&incoming)) {
                continue;
            }
            flow.saturated.insert(edge.index());
            for x in upstream {
                flow.feeding[x.index()].union_with(&incoming);
            }
        }
    }
    Ok(tree_edges)
}

/// The next arc to saturate and the time until it does.
///
/// Ties go to the arc with the lower `(src, dst)` pair.
fn next_saturation<T: Real>(
    topo: &Topology<T>,
    weights: &EdgeWeights<T>,
    in_tree: &[bool],
    flow: &Flow<T>,
) -> Option<(EdgeId, T)> {
    let mut best: Option<(EdgeId, T)> = None;
    for v in topo.node_ids() {
        let rate = flow.feeding[v.index()].count_ones(..);
        if rate == 0 || in_tree[v.index()] {
            continue;
        }
        let rate = T::from_usize(rate).unwrap();
        for &e in topo.in_edges(v) {
            if flow.closed.contains(e.index()) {
                continue;
            }
            let dt = ((weights[e] - flow.fill[v.index()]) / rate).max(T::zero());
            let wins = match best {
                None => true,
                Some((be, bdt)) => {
                    dt < bdt || (dt == bdt && (topo.edge(e).src, v) < (topo.edge(be).src, topo.edge(be).dst))
                }
            };
            if wins {
                best = Some((e, dt));
            }
        }
    }
    best
}

/// `u` plus every node that receives `u`'s water through saturated arcs.
fn upstream_of<T: Real>(topo: &Topology<T>, saturated: &FixedBitSet, u: NodeId) -> Vec<NodeId> {
    let mut seen = FixedBitSet::with_capacity(topo.node_count());
    let mut out = Vec::new();
    let mut stack = vec![u];
    seen.insert(u.index());
    while let Some(x) = stack.pop() {
        out.push(x);
        for &e in topo.in_edges(x) {
            let y = topo.edge(e).src;
            if saturated.contains(e.index()) && !seen.contains(y.index()) {
                seen.insert(y.index());
                stack.push(y);
            }
        }
    }
    out
}
