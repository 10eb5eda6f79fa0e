//! Transfer requests and synthetic workload generation.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Pareto};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::num::Real;
use crate::topology::{NodeId, Topology};

pub type RequestId = u64;

/// A bulk multicast job: one source, a fixed receiver set, a known volume.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRequest<T> {
    pub id: RequestId,
    pub source: NodeId,
    pub receivers: BTreeSet<NodeId>,
    pub volume: T,
    pub arrival: u64,
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("{receivers} receivers per transfer needs more than {nodes} nodes")]
    TooManyReceivers { receivers: usize, nodes: usize },
    #[error("receivers per transfer must be at least 1")]
    NoReceivers,
    #[error("invalid workload parameter: {0}")]
    Invalid(String),
    #[error("transfer {id}: {message}")]
    BadTransfer { id: RequestId, message: String },
    #[error("workload parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("empirical CDF line {line}: {message}")]
    Cdf { line: usize, message: String },
}

/// How transfer arrival slots are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalProcess {
    /// Exponential inter-arrival gaps with `rate` transfers per timeslot.
    Poisson { rate: f64 },
    /// Every transfer arrives at slot 0.
    Batch,
}

/// Transfer volume distribution, in full timeslots of unit capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VolumeDistribution {
    Exponential { mean: f64 },
    /// Pareto with scale `min`, samples clamped to `[min, max]`.
    Pareto { shape: f64, min: f64, max: f64 },
    /// Piecewise-linear CDF given as `(volume, cumulative probability)`.
    Empirical { points: Vec<(f64, f64)> },
}

impl VolumeDistribution {
    /// Clamped Pareto whose mean after clamping equals `mean`.
    pub fn pareto_with_mean(mean: f64, min: f64, max: f64) -> Result<Self, WorkloadError> {
        let shape = pareto_shape_for_mean(mean, min, max)?;
        Ok(Self::Pareto { shape, min, max })
    }

    /// Parses a two-column CDF file: `volume probability` per line,
    /// separated by whitespace or a comma. `#` starts a comment.
    pub fn empirical_from_text(text: &str) -> Result<Self, WorkloadError> {
        let mut points: Vec<(f64, f64)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: &str| WorkloadError::Cdf { line: i + 1, message: message.to_string() };
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            let [v, p] = cols.as_slice() else { return Err(err("expected two columns")) };
            let v: f64 = v.parse().map_err(|_| err("volume is not a number"))?;
            let p: f64 = p.parse().map_err(|_| err("probability is not a number"))?;
            if !(v > 0.0 && v.is_finite()) || !(0.0..=1.0).contains(&p) {
                return Err(err("volume must be positive and probability in [0, 1]"));
            }
            if let Some(&(pv, pp)) = points.last() {
                if v < pv || p < pp {
                    return Err(err("CDF must be non-decreasing"));
                }
            }
            points.push((v, p));
        }
        match points.last() {
            Some(&(_, p)) if (p - 1.0).abs() < 1e-9 => Ok(Self::Empirical { points }),
            _ => Err(WorkloadError::Cdf { line: 0, message: "CDF must end at probability 1".into() }),
        }
    }

    fn validate(&self) -> Result<(), WorkloadError> {
        let ok = match self {
            Self::Exponential { mean } => *mean > 0.0 && mean.is_finite(),
            Self::Pareto { shape, min, max } => *shape > 0.0 && *min > 0.0 && max >= min,
            Self::Empirical { points } => !points.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(WorkloadError::Invalid(format!("{self:?}")))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Exponential { mean } => Exp::new(1.0 / mean).unwrap().sample(rng),
            Self::Pareto { shape, min, max } => Pareto::new(*min, *shape).unwrap().sample(rng).clamp(*min, *max),
            Self::Empirical { points } => {
                let u: f64 = rng.random();
                let i = points.partition_point(|&(_, p)| p < u);
                let (v1, p1) = points[i.min(points.len() - 1)];
                if i == 0 {
                    return v1;
                }
                let (v0, p0) = points[i - 1];
                if p1 > p0 {
                    v0 + (v1 - v0) * (u - p0) / (p1 - p0)
                } else {
                    v1
                }
            }
        }
    }
}

/// Mean of `min(X, max)` for `X ~ Pareto(scale = min, shape)`.
pub fn clamped_pareto_mean(shape: f64, min: f64, max: f64) -> f64 {
    let ratio = max / min;
    let tail = if (shape - 1.0).abs() < 1e-12 {
        min * ratio.ln()
    } else {
        min / (shape - 1.0) * (1.0 - ratio.powf(1.0 - shape))
    };
    min + tail
}

/// Solves for the shape giving a clamped mean of `mean` (bisection; the
/// clamped mean decreases monotonically in the shape).
fn pareto_shape_for_mean(mean: f64, min: f64, max: f64) -> Result<f64, WorkloadError> {
    if !(min > 0.0 && max > min && mean > min && mean < max) {
        return Err(WorkloadError::Invalid(format!(
            "clamped Pareto needs min < mean < max (got {min}, {mean}, {max})"
        )));
    }
    let (mut lo, mut hi) = (1e-9, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clamped_pareto_mean(mid, min, max) > mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Parameters for a synthetic workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSpec {
    pub arrivals: ArrivalProcess,
    pub volume: VolumeDistribution,
    pub receivers: usize,
    pub transfers: usize,
    pub seed: u64,
    /// Timeslot length; sampled volumes are multiplied by it.
    pub delta: f64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            arrivals: ArrivalProcess::Poisson { rate: 1.0 },
            volume: VolumeDistribution::Exponential { mean: 20.0 },
            receivers: 8,
            transfers: 200,
            seed: 0,
            delta: 1.0,
        }
    }
}

/// Generates a deterministic workload for `topo`.
///
/// Senders cycle through the nodes in index order; receivers are drawn
/// uniformly without replacement from the other nodes; arrival slots are
/// the floors of accumulated exponential gaps.
pub fn generate_workload<T: Real>(spec: &WorkloadSpec, topo: &Topology<T>) -> Result<Vec<TransferRequest<T>>, WorkloadError> {
    let n = topo.node_count();
    if spec.receivers == 0 {
        return Err(WorkloadError::NoReceivers);
    }
    if spec.receivers >= n {
        return Err(WorkloadError::TooManyReceivers { receivers: spec.receivers, nodes: n });
    }
    if !(spec.delta > 0.0 && spec.delta.is_finite()) {
        return Err(WorkloadError::Invalid(format!("delta must be positive, got {}", spec.delta)));
    }
    spec.volume.validate()?;
    let gaps = match spec.arrivals {
        ArrivalProcess::Poisson { rate } if rate > 0.0 && rate.is_finite() => Some(Exp::new(rate).unwrap()),
        ArrivalProcess::Poisson { rate } => {
            return Err(WorkloadError::Invalid(format!("arrival rate must be positive, got {rate}")))
        }
        ArrivalProcess::Batch => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut clock = 0.0f64;
    let mut out = Vec::with_capacity(spec.transfers);
    for i in 0..spec.transfers {
        if let Some(gaps) = &gaps {
            clock += gaps.sample(&mut rng);
        }
        let source = NodeId::from(i % n);
        let receivers = sample(&mut rng, n - 1, spec.receivers)
            .into_iter()
            .map(|k| NodeId::from(if k >= source.index() { k + 1 } else { k }))
            .collect();
        let volume = spec.volume.sample(&mut rng) * spec.delta;
        out.push(TransferRequest {
            id: i as RequestId,
            source,
            receivers,
            volume: T::lit(volume),
            arrival: clock.floor() as u64,
        });
    }
    Ok(out)
}

/// On-disk workload schema; nodes are referenced by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadFile {
    pub topology: String,
    pub transfers: Vec<TransferRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferRecord {
    pub id: RequestId,
    pub source: String,
    pub receivers: Vec<String>,
    pub volume: f64,
    pub arrival: u64,
}

pub fn workload_to_json<T: Real>(requests: &[TransferRequest<T>], topo: &Topology<T>) -> String {
    let file = WorkloadFile {
        topology: topo.name().to_string(),
        transfers: requests
            .iter()
            .map(|r| TransferRecord {
                id: r.id,
                source: topo.node_name(r.source).to_string(),
                receivers: r.receivers.iter().map(|&n| topo.node_name(n).to_string()).collect(),
                volume: r.volume.as_f64(),
                arrival: r.arrival,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("workload serializes") + "\n"
}

pub fn workload_from_json<T: Real>(text: &str, topo: &Topology<T>) -> Result<Vec<TransferRequest<T>>, WorkloadError> {
    let file: WorkloadFile = serde_json::from_str(text)?;
    let mut ids = BTreeSet::new();
    let mut out = Vec::with_capacity(file.transfers.len());
    for rec in file.transfers {
        let bad = |message: String| WorkloadError::BadTransfer { id: rec.id, message };
        let lookup = |name: &str| topo.node_id(name).ok_or_else(|| bad(format!("unknown node {name:?}")));
        let source = lookup(&rec.source)?;
        let mut receivers = BTreeSet::new();
        for name in &rec.receivers {
            let node = lookup(name)?;
            if node == source || !receivers.insert(node) {
                return Err(bad(format!("receiver {name:?} duplicated or equal to the source")));
            }
        }
        if receivers.is_empty() {
            return Err(bad("no receivers".into()));
        }
        if !(rec.volume > 0.0 && rec.volume.is_finite()) {
            return Err(bad(format!("volume must be positive, got {}", rec.volume)));
        }
        if !ids.insert(rec.id) {
            return Err(bad("duplicate id".into()));
        }
        out.push(TransferRequest { id: rec.id, source, receivers, volume: T::lit(rec.volume), arrival: rec.arrival });
    }
    Ok(out)
}

/// Hex SHA-256 of the serialized workload, used to check that paired runs
/// consumed identical input.
pub fn workload_digest<T: Real>(requests: &[TransferRequest<T>], topo: &Topology<T>) -> String {
    Sha256::digest(workload_to_json(requests, topo).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
