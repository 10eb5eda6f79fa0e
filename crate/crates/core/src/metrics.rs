//! Run records, summary statistics and their CSV/JSON forms.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;
use crate::steiner::ForwardingTree;
use crate::topology::{NodeId, Topology};

pub const RECEIVERS_CSV: &str = "receivers.csv";
pub const REQUESTS_CSV: &str = "requests.csv";
pub const TIMELINE_CSV: &str = "timeline.csv";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
}

/// One group-table entry: a branching point of a tree away from its root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupEntry {
    pub node: NodeId,
    pub buckets: usize,
}

/// Entries a tree needs: one per non-root node with out-degree >= 2, with
/// one action bucket per outgoing tree edge.
pub fn group_table_entries<T: Real>(tree: &ForwardingTree<T>, topo: &Topology<T>) -> Vec<GroupEntry> {
    tree.out_degrees(topo)
        .into_iter()
        .filter(|&(node, deg)| node != tree.root && deg >= 2)
        .map(|(node, buckets)| GroupEntry { node, buckets })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverRecord {
    pub request_id: u64,
    pub receiver: String,
    pub arrival_slot: u64,
    pub completion_slot: u64,
    pub partition_id: usize,
    pub partition_size: usize,
    /// 1 for the request's fastest receiver.
    pub rank: usize,
}

impl ReceiverRecord {
    pub fn completion_time(&self) -> u64 {
        self.completion_slot - self.arrival_slot
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request_id: u64,
    pub volume: f64,
    pub n_partitions: usize,
    /// Sum over partitions of tree edge count times volume.
    pub bandwidth: f64,
    pub budget_weight_sum: f64,
    pub single_tree_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRecord {
    pub slot: u64,
    pub delivered_volume: f64,
    pub active_partitions: usize,
    pub max_group_entries: usize,
}

/// Everything recorded by one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub receivers: Vec<ReceiverRecord>,
    pub requests: Vec<RequestRecord>,
    pub timeline: Vec<TimelineRecord>,
}

/// Summary statistics; `None` where the report has nothing to average.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub receivers: usize,
    pub requests: usize,
    pub slots: usize,
    pub mean_completion: Option<f64>,
    pub median_completion: Option<f64>,
    pub p95_completion: Option<f64>,
    pub total_bandwidth: f64,
    /// Delivered volume per slot, over slots with at least one active partition.
    pub mean_throughput: Option<f64>,
    pub mean_partitions: Option<f64>,
    /// Mean completion time of the k-th fastest receiver, k = 1, 2, ...
    pub rank_mean_completion: Vec<f64>,
    pub max_group_entries: usize,
    /// Mean over busy slots of the busiest switch's entry count.
    pub mean_max_group_entries: Option<f64>,
}

/// Nearest-rank percentile of sorted data: the `ceil(p/100 * n)`-th value.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricsReport {
    /// Assigns per-request ranks by completion time, ties by `order_key`.
    pub fn assign_ranks(&mut self, mut order_key: impl FnMut(&ReceiverRecord) -> u64) {
        let mut by_request: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.receivers.iter().enumerate() {
            by_request.entry(r.request_id).or_default().push(i);
        }
        for idx in by_request.into_values() {
            let mut keyed: Vec<(u64, u64, usize)> = idx
                .into_iter()
                .map(|i| (self.receivers[i].completion_time(), order_key(&self.receivers[i]), i))
                .collect();
            keyed.sort();
            for (rank, (_, _, i)) in keyed.into_iter().enumerate() {
                self.receivers[i].rank = rank + 1;
            }
        }
    }

    pub fn summarize(&self) -> Summary {
        let mut times: Vec<f64> = self.receivers.iter().map(|r| r.completion_time() as f64).collect();
        times.sort_by(f64::total_cmp);

        let mut rank_totals: Vec<(f64, usize)> = Vec::new();
        for r in &self.receivers {
            if rank_totals.len() < r.rank {
                rank_totals.resize(r.rank, (0.0, 0));
            }
            let slot = &mut rank_totals[r.rank - 1];
            slot.0 += r.completion_time() as f64;
            slot.1 += 1;
        }

        let busy: Vec<&TimelineRecord> = self.timeline.iter().filter(|t| t.active_partitions > 0).collect();
        Summary {
            receivers: self.receivers.len(),
            requests: self.requests.len(),
            slots: self.timeline.len(),
            mean_completion: mean(times.iter().copied()),
            median_completion: nearest_rank(&times, 50.0),
            p95_completion: nearest_rank(&times, 95.0),
            total_bandwidth: self.requests.iter().map(|r| r.bandwidth).sum(),
            mean_throughput: mean(busy.iter().map(|t| t.delivered_volume)),
            mean_partitions: mean(self.requests.iter().map(|r| r.n_partitions as f64)),
            rank_mean_completion: rank_totals
                .into_iter()
                .filter(|&(_, n)| n > 0)
                .map(|(s, n)| s / n as f64)
                .collect(),
            max_group_entries: self.timeline.iter().map(|t| t.max_group_entries).max().unwrap_or(0),
            mean_max_group_entries: mean(busy.iter().map(|t| t.max_group_entries as f64)),
        }
    }

    /// Writes the three CSV tables into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<(), MetricsError> {
        write_table(&dir.join(RECEIVERS_CSV), &self.receivers)?;
        write_table(&dir.join(REQUESTS_CSV), &self.requests)?;
        write_table(&dir.join(TIMELINE_CSV), &self.timeline)
    }

    pub fn read_csv(dir: &Path) -> Result<Self, MetricsError> {
        Ok(Self {
            receivers: read_table(&dir.join(RECEIVERS_CSV))?,
            requests: read_table(&dir.join(REQUESTS_CSV))?,
            timeline: read_table(&dir.join(TIMELINE_CSV))?,
        })
    }

    pub fn write_json(&self, dir: &Path) -> Result<(), MetricsError> {
        let path = dir.join(REPORT_JSON);
        let text = serde_json::to_string_pretty(self).map_err(|source| MetricsError::Json { path: path.clone(), source })?;
        fs::write(&path, text + "\n").map_err(|source| MetricsError::Io { path, source })
    }

    pub fn read_json(dir: &Path) -> Result<Self, MetricsError> {
        let path = dir.join(REPORT_JSON);
        let text = fs::read_to_string(&path).map_err(|source| MetricsError::Io { path: path.clone(), source })?;
        serde_json::from_str(&text).map_err(|source| MetricsError::Json { path, source })
    }
}

/// CSV column names, in field order; written as-is for empty tables.
trait Table: Serialize {
    const HEADER: &'static [&'static str];
}

impl Table for ReceiverRecord {
    const HEADER: &'static [&'static str] =
        &["request_id", "receiver", "arrival_slot", "completion_slot", "partition_id", "partition_size", "rank"];
}

impl Table for RequestRecord {
    const HEADER: &'static [&'static str] =
        &["request_id", "volume", "n_partitions", "bandwidth", "budget_weight_sum", "single_tree_weight"];
}

impl Table for TimelineRecord {
    const HEADER: &'static [&'static str] = &["slot", "delivered_volume", "active_partitions", "max_group_entries"];
}

fn write_table<R: Table>(path: &Path, rows: &[R]) -> Result<(), MetricsError> {
    let csv_err = |source| MetricsError::Csv { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(|source| MetricsError::Io { path: path.to_path_buf(), source })?;
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_writer(file);
    if rows.is_empty() {
        w.write_record(R::HEADER).map_err(csv_err)?;
    }
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| MetricsError::Io { path: path.to_path_buf(), source })
}

fn read_table<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>, MetricsError> {
    let csv_err = |source| MetricsError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}
