//! Slotted-time simulation of bulk multicast transfers.

mod sim;
pub mod workload;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::load::WeightStrategy;
use crate::partition::{PartitionConfig, PartitionError, PartitionLimit};
use crate::schedule::{Policy, ScheduleError};
use crate::steiner::SteinerError;

pub use sim::{run, Simulation, StepOutcome};
pub use workload::{RequestId, TransferRequest};

/// How an arriving request is split and routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    /// Receiver partitioning with one load-aware tree per partition.
    #[default]
    QuickCast,
    /// One load-aware tree over all receivers.
    SingleTree,
    /// One minimum-hop path per receiver.
    UnicastMinHop,
    /// One tree with the fewest edges, ignoring load.
    MinEdgeSteiner,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::QuickCast, Scheme::SingleTree, Scheme::UnicastMinHop, Scheme::MinEdgeSteiner];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::QuickCast => "quickcast",
            Self::SingleTree => "single_tree",
            Self::UnicastMinHop => "unicast_minhop",
            Self::MinEdgeSteiner => "min_edge_steiner",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| {
            format!("unknown scheme {s:?} (expected quickcast, single_tree, unicast_minhop or min_edge_steiner)")
        })
    }
}

impl TryFrom<String> for Scheme {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub policy: Policy,
    pub weight: WeightStrategy,
    pub pf: f64,
    pub nmax: PartitionLimit,
    pub delta: f64,
    /// Recompute every link load from scratch after each slot and track the
    /// largest deviation from the incremental value.
    pub check_bookkeeping: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::QuickCast,
            policy: Policy::MaxMin,
            weight: WeightStrategy::LoadPlusVolume,
            pf: 1.1,
            nmax: PartitionLimit::Unbounded,
            delta: 1.0,
            check_bookkeeping: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(EngineError::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.pf > 0.0 && self.pf.is_finite()) {
            return Err(EngineError::Config(format!("pf must be positive, got {}", self.pf)));
        }
        Ok(())
    }

    pub fn partition_config(&self) -> PartitionConfig {
        PartitionConfig { factor: self.pf, limit: self.nmax, strategy: self.weight }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("request {id}: {message}")]
    BadRequest { id: RequestId, message: String },
    #[error("request {id}: {source}")]
    Routing { id: RequestId, source: SteinerError },
    #[error("request {id}: {source}")]
    Partitioning { id: RequestId, source: PartitionError },
    #[error("slot {slot}: infeasible allocation: {source}")]
    Infeasible { slot: u64, source: ScheduleError },
    #[error("slot {slot}: {active} active partitions but nothing was delivered")]
    Stalled { slot: u64, active: usize },
}
