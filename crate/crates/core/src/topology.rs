//! Directed, capacitated WAN graphs.
//!
//! Topology files list undirected links with raw capacities. Loading expands
//! every link into two directed edges of equal capacity and divides all
//! capacities by the largest raw capacity, so the fastest link has capacity
//! exactly 1. Node names are mapped to dense indices in file order.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

impl EdgeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for EdgeId {
    fn from(i: usize) -> Self {
        EdgeId(i as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    pub src: NodeId,
    pub dst: NodeId,
    pub capacity: T,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("topology has no nodes")]
    Empty,
    #[error("duplicate node identifier {0:?}")]
    DuplicateNode(String),
    #[error("link {link}: unknown node {node:?}")]
    DanglingNode { link: usize, node: String },
    #[error("link {link}: self-loop on node {node:?}")]
    SelfLoop { link: usize, node: String },
    #[error("link {link}: duplicate link between {a:?} and {b:?}")]
    DuplicateLink { link: usize, a: String, b: String },
    #[error("link {link}: capacity must be positive and finite, got {capacity}")]
    BadCapacity { link: usize, capacity: f64 },
    #[error("topology is disconnected: node {unreachable:?} cannot reach {from:?}")]
    Disconnected { from: String, unreachable: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// On-disk topology schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyFile {
    pub name: String,
    #[serde(default)]
    pub capacity_unit: String,
    pub nodes: Vec<String>,
    pub links: Vec<LinkRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkRecord {
    pub a: String,
    pub b: String,
    pub capacity: f64,
}

/// A validated topology. Immutable after construction.
///
/// Edge `2k` is the `a -> b` direction of link `k` and edge `2k + 1` is
/// `b -> a`.
#[derive(Debug, Clone)]
pub struct Topology<T> {
    name: String,
    capacity_unit: String,
    nodes: Vec<String>,
    edges: Vec<Edge<T>>,
    out_edges: Vec<Vec<EdgeId>>,
    in_edges: Vec<Vec<EdgeId>>,
    by_endpoints: HashMap<(NodeId, NodeId), EdgeId>,
}

impl<T: Real> Topology<T> {
    /// Parses and validates topology text, normalizing capacities.
    pub fn from_json_str(text: &str) -> Result<Self, TopologyError> {
        let file: TopologyFile = serde_json::from_str(text).map_err(|e| TopologyError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(file, true)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TopologyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Builds a topology from an in-memory description.
    ///
    /// With `normalize == false` capacities are kept as given, which is
    /// useful for hand-built scenarios expressed in absolute units.
    pub fn from_file(file: TopologyFile, normalize: bool) -> Result<Self, TopologyError> {
        if file.nodes.is_empty() {
            return Err(TopologyError::Empty);
        }
        let mut index = HashMap::with_capacity(file.nodes.len());
        for (i, name) in file.nodes.iter().enumerate() {
            if index.insert(name.as_str(), NodeId::from(i)).is_some() {
                return Err(TopologyError::DuplicateNode(name.clone()));
            }
        }

        let mut max_raw = 0.0f64;
        for (k, link) in file.links.iter().enumerate() {
            if !(link.capacity.is_finite() && link.capacity > 0.0) {
                return Err(TopologyError::BadCapacity { link: k, capacity: link.capacity });
            }
            max_raw = max_raw.max(link.capacity);
        }
        let scale = if normalize { max_raw } else { 1.0 };

        let n = file.nodes.len();
        let mut edges = Vec::with_capacity(2 * file.links.len());
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        let mut by_endpoints = HashMap::with_capacity(2 * file.links.len());
        for (k, link) in file.links.iter().enumerate() {
            let lookup = |name: &str| {
                index.get(name).copied().ok_or_else(|| TopologyError::DanglingNode {
                    link: k,
                    node: name.to_string(),
                })
            };
            let a = lookup(&link.a)?;
            let b = lookup(&link.b)?;
            if a == b {
                return Err(TopologyError::SelfLoop { link: k, node: link.a.clone() });
            }
            if by_endpoints.contains_key(&(a, b)) {
                return Err(TopologyError::DuplicateLink {
                    link: k,
                    a: link.a.clone(),
                    b: link.b.clone(),
                });
            }
            // exact for the maximum link, so at least one edge has capacity 1
            let capacity = T::lit(link.capacity / scale);
            for (src, dst) in [(a, b), (b, a)] {
                let id = EdgeId::from(edges.len());
                edges.push(Edge { src, dst, capacity });
                out_edges[src.index()].push(id);
                in_edges[dst.index()].push(id);
                by_endpoints.insert((src, dst), id);
            }
        }

        let topo = Topology {
            name: file.name,
            capacity_unit: file.capacity_unit,
            nodes: file.nodes,
            edges,
            out_edges,
            in_edges,
            by_endpoints,
        };
        topo.check_connected()?;
        Ok(topo)
    }

    fn check_connected(&self) -> Result<(), TopologyError> {
        let hops = self.bfs_hops(NodeId(0));
        match hops.iter().position(|h| h.is_none()) {
            None => Ok(()),
            Some(i) => Err(TopologyError::Disconnected {
                from: self.nodes[0].clone(),
                unreachable: self.nodes[i].clone(),
            }),
        }
    }

    fn bfs_hops(&self, from: NodeId) -> Vec<Option<u32>> {
        let mut hops = vec![None; self.nodes.len()];
        hops[from.index()] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            let next = hops[u.index()].unwrap() + 1;
            let neighbours = self.out_edges[u.index()]
                .iter()
                .map(|&e| self.edges[e.index()].dst)
                .chain(self.in_edges[u.index()].iter().map(|&e| self.edges[e.index()].src));
            for v in neighbours {
                if hops[v.index()].is_none() {
                    hops[v.index()] = Some(next);
                    queue.push_back(v);
                }
            }
        }
        hops
    }

    /// All-pairs hop counts on the undirected view.
    pub fn hop_distances(&self) -> HopDistanceMatrix {
        let n = self.nodes.len();
        let mut dist = Vec::with_capacity(n * n);
        for a in 0..n {
            dist.extend(
                self.bfs_hops(NodeId::from(a))
                    .into_iter()
                    .map(|h| h.expect("validated topology is connected")),
            );
        }
        HopDistanceMatrix { n, dist }
    }

    /// Serializes back to the file schema, with normalized capacities.
    pub fn to_file(&self) -> TopologyFile {
        TopologyFile {
            name: self.name.clone(),
            capacity_unit: self.capacity_unit.clone(),
            nodes: self.nodes.clone(),
            links: self
                .edges
                .iter()
                .step_by(2)
                .map(|e| LinkRecord {
                    a: self.nodes[e.src.index()].clone(),
                    b: self.nodes[e.dst.index()].clone(),
                    capacity: e.capacity.as_f64(),
                })
                .collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("topology serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn capacity_unit(&self) -> &str {
        &self.capacity_unit
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of undirected links.
    pub fn link_count(&self) -> usize {
        self.edges.len() / 2
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId::from)
    }

    pub fn node_names(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.index()]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n == name).map(NodeId::from)
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        id.index() < self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge<T> {
        &self.edges[id.index()]
    }

    pub fn capacity(&self, id: EdgeId) -> T {
        self.edges[id.index()].capacity
    }

    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.out_edges[node.index()]
    }

    pub fn in_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.in_edges[node.index()]
    }

    pub fn find_edge(&self, src: NodeId, dst: NodeId) -> Option<EdgeId> {
        self.by_endpoints.get(&(src, dst)).copied()
    }

    pub fn min_capacity(&self) -> T {
        self.edges.iter().map(|e| e.capacity).fold(T::infinity(), T::min)
    }

    pub fn max_capacity(&self) -> T {
        self.edges.iter().map(|e| e.capacity).fold(T::zero(), T::max)
    }
}

impl<T: Real> PartialEq for Topology<T> {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.capacity_unit == other.capacity_unit
            && self.nodes == other.nodes
            && self.edges == other.edges
    }
}

/// Symmetric matrix of minimum hop counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopDistanceMatrix {
    n: usize,
    dist: Vec<u32>,
}

impl HopDistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> u32 {
        self.dist[a.index() * self.n + b.index()]
    }
}

/// Topologies shipped with the crate.
pub mod bundled {
    pub const ANS: &str = include_str!("../topologies/ans.json");
    pub const GEANT: &str = include_str!("../topologies/geant.json");
    pub const UNINETT: &str = include_str!("../topologies/uninett.json");

    /// Looks up a bundled topology by case-insensitive name.
    pub fn by_name(name: &str) -> Option<&'static str> {
        match name.to_ascii_lowercase().as_str() {
            "ans" => Some(ANS),
            "geant" => Some(GEANT),
            "uninett" => Some(UNINETT),
            _ => None,
        }
    }
}
