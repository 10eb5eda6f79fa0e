//! Experiment description, flag resolution over a config file, and
//! single-run execution.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use bulkcast::engine::workload::{
    clamped_pareto_mean, generate_workload, workload_digest, workload_from_json, ArrivalProcess, VolumeDistribution,
    WorkloadSpec,
};
use bulkcast::engine::EngineError;
use bulkcast::metrics::MetricsReport;
use bulkcast::topology::bundled;
use bulkcast::{PartitionLimit, Policy, Scheme, SimConfig, Simulation, Summary, Topology, TransferRequest, WeightStrategy};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Pareto samples are clamped to this range, in full timeslots.
pub const PARETO_RANGE: (f64, f64) = (2.0, 2000.0);

/// Mean volume used when switching away from an empirical distribution.
pub const DEFAULT_MEAN_VOLUME: f64 = 20.0;

/// Largest tolerated `|incremental - recomputed|` link load.
pub const BOOKKEEPING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VolumeKind {
    Exponential,
    Pareto,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Everything needed to reproduce one run. Also the schema of `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    /// Topology file path or bundled name.
    pub topology: String,
    pub workload: WorkloadSpec,
    /// Replay transfers from this file instead of generating them.
    pub workload_file: Option<PathBuf>,
    pub sim: SimConfig,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            topology: "geant".into(),
            workload: WorkloadSpec::default(),
            workload_file: None,
            sim: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// JSON experiment file; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Topology JSON file or bundled name (ans, geant, uninett)
    #[arg(long)]
    pub topology: Option<String>,
    /// Replay transfers from a workload file
    #[arg(long)]
    pub workload: Option<PathBuf>,
    /// Receivers per transfer
    #[arg(long)]
    pub receivers: Option<usize>,
    /// Poisson arrival rate, transfers per timeslot
    #[arg(long, conflicts_with = "batch")]
    pub lambda: Option<f64>,
    /// Every transfer arrives at slot 0
    #[arg(long)]
    pub batch: bool,
    #[arg(long)]
    pub transfers: Option<usize>,
    /// Mean volume in full timeslots
    #[arg(long)]
    pub mean_volume: Option<f64>,
    #[arg(long, value_enum)]
    pub volume_dist: Option<VolumeKind>,
    /// Two-column CDF file (volume, cumulative probability)
    #[arg(long)]
    pub cdf: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Timeslot length
    #[arg(long)]
    pub delta: Option<f64>,
    /// maxmin, srpt or fcfs
    #[arg(long)]
    pub policy: Option<Policy>,
    /// Partitioning factor
    #[arg(long)]
    pub pf: Option<f64>,
    /// Maximum partitions per transfer: an integer or "all"
    #[arg(long)]
    pub nmax: Option<PartitionLimit>,
    /// Tree weight strategy, w1..w10
    #[arg(long)]
    pub weight: Option<WeightStrategy>,
    /// quickcast, single_tree, unicast_minhop or min_edge_steiner
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Recompute link loads after every slot and fail on drift
    #[arg(long)]
    pub check_bookkeeping: bool,
}

impl ExperimentArgs {
    pub fn resolve(&self) -> Result<Experiment, CliError> {
        let mut exp = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))
                    .map_err(CliError::Config)?;
                serde_json::from_str(&text)
                    .with_context(|| format!("invalid config {}", path.display()))
                    .map_err(CliError::Config)?
            }
            None => Experiment::default(),
        };
        if let Some(t) = &self.topology {
            exp.topology = t.clone();
        }
        if let Some(w) = &self.workload {
            exp.workload_file = Some(w.clone());
        }

        let spec = &mut exp.workload;
        if let Some(n) = self.receivers {
            spec.receivers = n;
        }
        if let Some(rate) = self.lambda {
            spec.arrivals = ArrivalProcess::Poisson { rate };
        }
        if self.batch {
            spec.arrivals = ArrivalProcess::Batch;
        }
        if let Some(n) = self.transfers {
            spec.transfers = n;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if self.volume_dist.is_some() || self.mean_volume.is_some() || self.cdf.is_some() {
            spec.volume = self.volume(&spec.volume)?;
        }

        let sim = &mut exp.sim;
        if let Some(p) = self.policy {
            sim.policy = p;
        }
        if let Some(pf) = self.pf {
            sim.pf = pf;
        }
        if let Some(n) = self.nmax {
            sim.nmax = n;
        }
        if let Some(w) = self.weight {
            sim.weight = w;
        }
        if let Some(s) = self.scheme {
            sim.scheme = s;
        }
        if let Some(d) = self.delta {
            sim.delta = d;
        }
        sim.check_bookkeeping |= self.check_bookkeeping;
        exp.workload.delta = exp.sim.delta;

        exp.sim.validate().map_err(|e| CliError::Config(e.into()))?;
        if let ArrivalProcess::Poisson { rate } = exp.workload.arrivals {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(CliError::Config(anyhow!("lambda must be positive, got {rate}")));
            }
        }
        Ok(exp)
    }

    fn volume(&self, current: &VolumeDistribution) -> Result<VolumeDistribution, CliError> {
        let kind = self.volume_dist.unwrap_or(match current {
            VolumeDistribution::Exponential { .. } => VolumeKind::Exponential,
            VolumeDistribution::Pareto { .. } => VolumeKind::Pareto,
            VolumeDistribution::Empirical { .. } => VolumeKind::Empirical,
        });
        let current_mean = match *current {
            VolumeDistribution::Exponential { mean } => mean,
            VolumeDistribution::Pareto { shape, min, max } => clamped_pareto_mean(shape, min, max),
            VolumeDistribution::Empirical { .. } => DEFAULT_MEAN_VOLUME,
        };
        let mean = self.mean_volume.unwrap_or(current_mean);
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(CliError::Config(anyhow!("mean volume must be positive, got {mean}")));
        }
        match kind {
            VolumeKind::Exponential => Ok(VolumeDistribution::Exponential { mean }),
            VolumeKind::Pareto => {
                let (min, max) = match *current {
                    VolumeDistribution::Pareto { min, max, .. } => (min, max),
                    _ => PARETO_RANGE,
                };
                VolumeDistribution::pareto_with_mean(mean, min, max).map_err(|e| CliError::Config(e.into()))
            }
            VolumeKind::Empirical => {
                if self.mean_volume.is_some() {
                    return Err(CliError::Config(anyhow!("--mean-volume does not apply to an empirical distribution")));
                }
                match (&self.cdf, current) {
                    (Some(path), _) => {
                        let text = fs::read_to_string(path)
                            .with_context(|| format!("cannot read CDF file {}", path.display()))
                            .map_err(CliError::Config)?;
                        VolumeDistribution::empirical_from_text(&text)
                            .with_context(|| format!("invalid CDF file {}", path.display()))
                            .map_err(CliError::Config)
                    }
                    (None, VolumeDistribution::Empirical { .. }) => Ok(current.clone()),
                    (None, _) => Err(CliError::Config(anyhow!("--volume-dist empirical needs --cdf"))),
                }
            }
        }
    }
}

/// Loads a topology from a file, falling back to the bundled names.
pub fn load_topology(reference: &str) -> Result<Topology, CliError> {
    let path = Path::new(reference);
    if path.is_file() {
        return Topology::load(path).map_err(|e| CliError::Config(e.into()));
    }
    if let Some(text) = bundled::by_name(reference) {
        return Topology::from_json_str(text).map_err(|e| CliError::Config(e.into()));
    }
    Err(CliError::Config(anyhow!(
        "topology file {} not found (bundled topologies: ans, geant, uninett)",
        path.display()
    )))
}

/// A topology and the transfers to run on it.
pub struct Prepared {
    pub topology: Topology,
    pub requests: Vec<TransferRequest>,
    pub workload_hash: String,
}

impl Prepared {
    pub fn new(exp: &Experiment) -> Result<Self, CliError> {
        let topology = load_topology(&exp.topology)?;
        Self::with_topology(exp, topology)
    }

    pub fn with_topology(exp: &Experiment, topology: Topology) -> Result<Self, CliError> {
        let requests = match &exp.workload_file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read workload {}", path.display()))
                    .map_err(CliError::Config)?;
                workload_from_json(&text, &topology)
                    .with_context(|| format!("invalid workload {}", path.display()))
                    .map_err(CliError::Config)?
            }
            None => generate_workload(&exp.workload, &topology).map_err(|e| CliError::Config(e.into()))?,
        };
        let workload_hash = workload_digest(&requests, &topology);
        Ok(Self { topology, requests, workload_hash })
    }
}

/// Link-load drift observed with `check_bookkeeping`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bookkeeping {
    pub max_load_error: f64,
    pub consistency_alarms: usize,
}

pub struct Outcome {
    pub report: MetricsReport,
    pub bookkeeping: Option<Bookkeeping>,
}

/// Runs one simulation; load drift beyond tolerance is a runtime error.
pub fn execute(prep: &Prepared, sim: SimConfig) -> Result<Outcome, CliError> {
    let mut run = Simulation::new(&prep.topology, sim, prep.requests.clone()).map_err(classify)?;
    run.run_to_end().map_err(classify)?;
    let bookkeeping = sim.check_bookkeeping.then(|| Bookkeeping {
        max_load_error: run.max_load_error(),
        consistency_alarms: run.link_state().consistency_alarms(),
    });
    if let Some(b) = bookkeeping {
        if b.max_load_error > BOOKKEEPING_TOLERANCE {
            return Err(CliError::Runtime(anyhow!(
                "link load bookkeeping drifted by {:e} (tolerance {:e})",
                b.max_load_error,
                BOOKKEEPING_TOLERANCE
            )));
        }
    }
    Ok(Outcome { report: run.report(), bookkeeping })
}

fn classify(e: EngineError) -> CliError {
    match e {
        EngineError::Config(_) | EngineError::BadRequest { .. } => CliError::Config(e.into()),
        _ => CliError::Runtime(e.into()),
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub config: Experiment,
    pub seed: u64,
    pub workload_hash: String,
    pub transfers: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bookkeeping: Option<Bookkeeping>,
    pub summary: Summary,
}

pub const SUMMARY_JSON: &str = "summary.json";

/// Writes the metrics files and `summary.json` into `dir`.
pub fn write_outputs(
    dir: &Path,
    format: OutputFormat,
    exp: &Experiment,
    prep: &Prepared,
    outcome: &Outcome,
) -> Result<SummaryFile, CliError> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(CliError::Runtime)?;
    match format {
        OutputFormat::Csv => outcome.report.write_csv(dir),
        OutputFormat::Json => outcome.report.write_json(dir),
    }
    .map_err(|e| CliError::Runtime(e.into()))?;
    let summary = SummaryFile {
        config: exp.clone(),
        seed: exp.workload.seed,
        workload_hash: prep.workload_hash.clone(),
        transfers: prep.requests.len(),
        bookkeeping: outcome.bookkeeping,
        summary: outcome.report.summarize(),
    };
    write_json(&dir.join(SUMMARY_JSON), &summary)?;
    Ok(summary)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.into()))?;
    text.push('\n');
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::Runtime)
}
