//! Flow-level simulator for bulk multicast transfers over inter-datacenter
//! WANs: load-aware Steiner trees, receiver-set partitioning and per-slot
//! rate allocation.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod engine;
pub mod load;
pub mod metrics;
pub mod num;
pub mod partition;
pub mod schedule;
pub mod steiner;
pub mod topology;

pub use engine::{EngineError, Scheme, SimConfig};
pub use load::WeightStrategy;
pub use metrics::{MetricsReport, Summary};
pub use num::Real;
pub use partition::PartitionLimit;
pub use schedule::Policy;
pub use topology::{EdgeId, NodeId};

pub type Topology = topology::Topology<f64>;
pub type TransferRequest = engine::TransferRequest<f64>;
pub type ForwardingTree = steiner::ForwardingTree<f64>;
pub type LinkState = load::LinkState<f64>;
pub type PartitionState = partition::PartitionState<f64>;
pub type Simulation<'a> = engine::Simulation<'a, f64>;
